//! Offline parsers for structured model responses.

use std::collections::BTreeSet;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::corpus::Term;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseError {
    #[error("no <answer> tag found")]
    NoAnswerTag,
    #[error("answer tag holds {0:?}, expected true or false")]
    InvalidAnswer(String),
    #[error("no list found")]
    NotAList,
    #[error("unbalanced brackets or quotes")]
    Unbalanced,
    #[error("non-string list element near {0:?}")]
    NonStringElement(String),
    #[error("invalid JSON: {0}")]
    InvalidJson(String),
    #[error("missing key {0}")]
    MissingKey(String),
    #[error("key {key} should be {expected}")]
    TypeMismatch { key: String, expected: &'static str },
    #[error("response is empty")]
    Empty,
}

/// Extracts the last `<answer>…</answer>` span (tags matched case-insensitively).
pub fn parse_tagged_answer(text: &str) -> Result<bool, ParseError> {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| Regex::new(r"(?is)<answer>(.*?)</answer>").expect("valid regex"));
    let last = re
        .captures_iter(text)
        .last()
        .ok_or(ParseError::NoAnswerTag)?;
    let inner = last[1].trim();
    match inner.to_ascii_lowercase().as_str() {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(ParseError::InvalidAnswer(inner.to_owned())),
    }
}

/// Parses a Python-style list of quoted strings (`['A', "B"]`), keeping order.
/// Text before the opening bracket and after the closing one is ignored.
pub fn parse_charge_list(text: &str) -> Result<Vec<String>, ParseError> {
    let start = text.find('[').ok_or(ParseError::NotAList)?;
    let mut chars = text[start + 1..].chars().peekable();
    let mut out = Vec::new();
    let skip_ws = |it: &mut std::iter::Peekable<std::str::Chars<'_>>| {
        while it.peek().is_some_and(|c| c.is_whitespace()) {
            it.next();
        }
    };
    loop {
        skip_ws(&mut chars);
        match chars.next() {
            None => return Err(ParseError::Unbalanced),
            Some(']') => return Ok(out),
            Some(q @ ('\'' | '"')) => {
                let mut item = String::new();
                loop {
                    match chars.next() {
                        None => return Err(ParseError::Unbalanced),
                        Some('\\') => match chars.next() {
                            Some(c) => item.push(c),
                            None => return Err(ParseError::Unbalanced),
                        },
                        Some(c) if c == q => break,
                        Some(c) => item.push(c),
                    }
                }
                out.push(item.trim().to_owned());
                skip_ws(&mut chars);
                match chars.next() {
                    Some(',') => continue,
                    Some(']') => return Ok(out),
                    None => return Err(ParseError::Unbalanced),
                    Some(c) => return Err(ParseError::NonStringElement(c.to_string())),
                }
            }
            Some(c) => {
                let mut near = String::from(c);
                near.extend(chars.by_ref().take_while(|c| !matches!(c, ',' | ']')));
                return Err(ParseError::NonStringElement(near.trim().to_owned()));
            }
        }
    }
}

/// Extracts the JSON value spanning the first `open` to the last `close` byte,
/// which tolerates code fences and stray prose around it.
fn json_span(text: &str, open: char, close: char) -> Result<Value, ParseError> {
    let start = text
        .find(open)
        .ok_or_else(|| ParseError::InvalidJson("no JSON value found".into()))?;
    let end = text
        .rfind(close)
        .filter(|&e| e > start)
        .ok_or(ParseError::Unbalanced)?;
    serde_json::from_str(&text[start..=end]).map_err(|e| ParseError::InvalidJson(e.to_string()))
}

/// Checklist items from a JSON list of strings, blank items dropped.
pub fn parse_string_list(text: &str) -> Result<Vec<String>, ParseError> {
    match json_span(text, '[', ']')? {
        Value::Array(items) => items
            .into_iter()
            .map(|v| match v {
                Value::String(s) => Ok(s.trim().to_owned()),
                other => Err(ParseError::NonStringElement(other.to_string())),
            })
            .filter(|r| r.as_ref().map_or(true, |s| !s.is_empty()))
            .collect(),
        _ => Err(ParseError::NotAList),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentencingOutput {
    pub charge_name: Vec<String>,
    /// As written by the model; integers are rendered as decimal strings.
    pub law_article: Vec<String>,
    pub term: Term,
}

pub fn parse_sentencing_json(text: &str) -> Result<SentencingOutput, ParseError> {
    let value = json_span(text, '{', '}')?;
    let obj = value.as_object().ok_or(ParseError::TypeMismatch {
        key: "<root>".into(),
        expected: "an object",
    })?;
    let field = |key: &str| {
        obj.get(key)
            .ok_or_else(|| ParseError::MissingKey(key.to_owned()))
    };

    let charge_name = match field("charge_name")? {
        Value::Array(items) => items
            .iter()
            .map(|v| {
                v.as_str()
                    .map(|s| s.trim().to_owned())
                    .ok_or(ParseError::TypeMismatch {
                        key: "charge_name".into(),
                        expected: "a list of strings",
                    })
            })
            .collect::<Result<Vec<_>, _>>()?,
        _ => {
            return Err(ParseError::TypeMismatch {
                key: "charge_name".into(),
                expected: "a list of strings",
            })
        }
    };
    let law_article = match field("law_article")? {
        Value::Array(items) => items
            .iter()
            .map(|v| match v {
                Value::String(s) => Ok(s.trim().to_owned()),
                Value::Number(n) if n.is_u64() => Ok(n.to_string()),
                _ => Err(ParseError::TypeMismatch {
                    key: "law_article".into(),
                    expected: "a list of strings or integers",
                }),
            })
            .collect::<Result<Vec<_>, _>>()?,
        _ => {
            return Err(ParseError::TypeMismatch {
                key: "law_article".into(),
                expected: "a list of strings or integers",
            })
        }
    };

    let term_obj = field("term_of_imprisonment")?
        .as_object()
        .ok_or(ParseError::TypeMismatch {
            key: "term_of_imprisonment".into(),
            expected: "an object",
        })?;
    let term_field = |key: &str| {
        term_obj
            .get(key)
            .ok_or_else(|| ParseError::MissingKey(format!("term_of_imprisonment.{key}")))
    };
    let flag = |key: &str| {
        term_field(key)?.as_bool().ok_or(ParseError::TypeMismatch {
            key: format!("term_of_imprisonment.{key}"),
            expected: "a boolean",
        })
    };
    let death = flag("death_penalty")?;
    let life = flag("life_imprisonment")?;
    let months = term_field("imprisonment")?
        .as_u64()
        .and_then(|m| u32::try_from(m).ok())
        .ok_or(ParseError::TypeMismatch {
            key: "term_of_imprisonment.imprisonment".into(),
            expected: "a non-negative integer",
        })?;
    let term = if death {
        Term::Death
    } else if life {
        Term::Life
    } else {
        Term::Months(months)
    };
    Ok(SentencingOutput {
        charge_name,
        law_article,
        term,
    })
}

/// Every `[n]` marker in the text, deduplicated.
pub fn parse_citations(text: &str) -> BTreeSet<usize> {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| Regex::new(r"\[(\d+)\]").expect("valid regex"));
    re.captures_iter(text)
        .filter_map(|c| c[1].parse().ok())
        .collect()
}

/// Keywords in the four fixed feature dimensions.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeywordFeatures {
    pub defendant_attributes: Vec<String>,
    pub criminal_behaviors: Vec<String>,
    pub victim_characteristics: Vec<String>,
    pub subjective_mental_states: Vec<String>,
}

impl KeywordFeatures {
    pub fn is_empty(&self) -> bool {
        self.dimensions().iter().all(|(_, v)| v.is_empty())
    }

    pub fn dimensions(&self) -> [(&'static str, &[String]); 4] {
        [
            ("Defendant Attributes", &self.defendant_attributes),
            ("Criminal Behaviors", &self.criminal_behaviors),
            ("Victim Characteristics", &self.victim_characteristics),
            ("Subjective Mental States", &self.subjective_mental_states),
        ]
    }

    /// Canonical text used for embedding and prompts, dimensions in fixed order.
    pub fn render(&self) -> String {
        self.dimensions()
            .iter()
            .map(|(label, values)| format!("{label}: {}", values.join(", ")))
            .collect::<Vec<_>>()
            .join("; ")
    }
}

/// Parses the keyword-extraction object. Key spelling is normalized
/// (`Defendant_Attribute`, `defendant attributes`, … all match); absent
/// dimensions are empty.
pub fn parse_keywords(text: &str) -> Result<KeywordFeatures, ParseError> {
    if text.trim().is_empty() {
        return Err(ParseError::Empty);
    }
    let value = json_span(text, '{', '}')?;
    let obj = value.as_object().ok_or(ParseError::TypeMismatch {
        key: "<root>".into(),
        expected: "an object",
    })?;
    let mut out = KeywordFeatures::default();
    for (key, v) in obj {
        let norm: String = key
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        let norm = norm.trim_end_matches('s');
        let slot = match norm {
            "defendantattribute" => &mut out.defendant_attributes,
            "criminalbehavior" => &mut out.criminal_behaviors,
            "victimcharacteristic" => &mut out.victim_characteristics,
            "subjectivementalstate" => &mut out.subjective_mental_states,
            _ => continue,
        };
        let items = v.as_array().ok_or_else(|| ParseError::TypeMismatch {
            key: key.clone(),
            expected: "a list of strings",
        })?;
        for item in items {
            let s = item.as_str().ok_or_else(|| ParseError::TypeMismatch {
                key: key.clone(),
                expected: "a list of strings",
            })?;
            let s = s.trim();
            if !s.is_empty() {
                slot.push(s.to_owned());
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tagged_answers() {
        assert_eq!(
            parse_tagged_answer("reasoning ... <answer>true</answer>"),
            Ok(true)
        );
        assert_eq!(parse_tagged_answer("<answer>FALSE</answer>"), Ok(false));
        assert_eq!(parse_tagged_answer("<ANSWER> true </ANSWER>"), Ok(true));
        assert_eq!(
            parse_tagged_answer("<answer>false</answer> then <answer>true</answer>"),
            Ok(true)
        );
        assert_eq!(
            parse_tagged_answer("no tags here"),
            Err(ParseError::NoAnswerTag)
        );
        assert_eq!(
            parse_tagged_answer("<answer>maybe</answer>"),
            Err(ParseError::InvalidAnswer("maybe".into()))
        );
    }

    #[test]
    fn charge_lists() {
        assert_eq!(
            parse_charge_list("['Theft', 'Robbery']").unwrap(),
            ["Theft", "Robbery"]
        );
        assert!(parse_charge_list("[]").unwrap().is_empty());
        assert_eq!(parse_charge_list("[\"Fraud\",]").unwrap(), ["Fraud"]);
        assert_eq!(parse_charge_list("garbage"), Err(ParseError::NotAList));
        assert_eq!(parse_charge_list("['Theft'"), Err(ParseError::Unbalanced));
        assert_eq!(parse_charge_list("['Theft"), Err(ParseError::Unbalanced));
        assert!(matches!(
            parse_charge_list("[1, 'Theft']"),
            Err(ParseError::NonStringElement(_))
        ));
    }

    #[test]
    fn sentencing_schema_instance() {
        let text = r#"{"charge_name": ["Theft"], "law_article": ["Art. 264"],
            "term_of_imprisonment": {"death_penalty": false, "imprisonment": 36, "life_imprisonment": false}}"#;
        let s = parse_sentencing_json(text).unwrap();
        assert_eq!(s.term, Term::Months(36));
        assert_eq!(s.law_article, ["Art. 264"]);
    }

    #[test]
    fn sentencing_flags_and_errors() {
        let death = r#"{"charge_name": [], "law_article": [232],
            "term_of_imprisonment": {"death_penalty": true, "imprisonment": 0, "life_imprisonment": false}}"#;
        let s = parse_sentencing_json(death).unwrap();
        assert_eq!(s.term, Term::Death);
        assert_eq!(s.law_article, ["232"]);
        let missing = r#"{"charge_name": [], "term_of_imprisonment": {}}"#;
        assert_eq!(
            parse_sentencing_json(missing),
            Err(ParseError::MissingKey("law_article".into()))
        );
    }

    #[test]
    fn citations() {
        assert_eq!(
            parse_citations("per [1][3] the act"),
            BTreeSet::from([1, 3])
        );
        assert!(parse_citations("none").is_empty());
        assert_eq!(parse_citations("[2][2]"), BTreeSet::from([2]));
    }

    #[test]
    fn keyword_object_from_the_prompt_example() {
        let text = r#"{ "Defendant_Attribute": ["Adult", "Prior Criminal Record"],
            "Criminal_Behaviors": ["Theft", "Burglary"],
            "Victim_Characteristics": ["Private Residence", "Large Amount"],
            "Subjective_Mental_States": ["Direct Intent", "Voluntary Surrender"] }"#;
        let k = parse_keywords(text).unwrap();
        assert_eq!(k.defendant_attributes, ["Adult", "Prior Criminal Record"]);
        assert_eq!(
            k.subjective_mental_states,
            ["Direct Intent", "Voluntary Surrender"]
        );
        assert_eq!(
            k.render(),
            "Defendant Attributes: Adult, Prior Criminal Record; Criminal Behaviors: Theft, Burglary; \
             Victim Characteristics: Private Residence, Large Amount; \
             Subjective Mental States: Direct Intent, Voluntary Surrender"
        );
    }

    #[test]
    fn keyword_key_variants_and_missing_dimensions() {
        let k = parse_keywords(r#"{"defendant attributes": ["Adult"]}"#).unwrap();
        assert_eq!(k.defendant_attributes, ["Adult"]);
        assert!(k.criminal_behaviors.is_empty());
        assert!(parse_keywords("").is_err());
        assert!(parse_keywords(r#"{"Criminal_Behaviors": "Theft"}"#).is_err());
    }
}
