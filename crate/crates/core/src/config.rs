//! Sectioned key-value text format shared by model files and run configs.
//!
//! ```text
//! # comment
//! [section]
//! key = value        ; trailing comments start with '#' or ';'
//! list = 0.2, 0.1, 0.05
//! ```
//!
//! Section and key names are case-sensitive. Values may be wrapped in double
//! quotes. Every syntax problem is reported with its line number, and parsing
//! continues so that all problems surface at once.

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub key: String,
    pub value: String,
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Section {
    pub name: String,
    pub line: usize,
    pub entries: Vec<Entry>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Document {
    pub sections: Vec<Section>,
}

impl Document {
    pub fn parse(text: &str) -> std::result::Result<Self, Vec<Error>> {
        let mut doc = Document::default();
        let mut errors = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = strip_comment(raw).trim();
            if content.is_empty() {
                continue;
            }
            if let Some(rest) = content.strip_prefix('[') {
                let Some(name) = rest.strip_suffix(']') else {
                    errors.push(syntax(line, "unterminated section header"));
                    continue;
                };
                let name = name.trim();
                if name.is_empty() {
                    errors.push(syntax(line, "empty section name"));
                    continue;
                }
                if let Some(prev) = doc.section(name) {
                    errors.push(syntax(
                        line,
                        &format!("section [{name}] already defined on line {}", prev.line),
                    ));
                }
                doc.sections.push(Section {
                    name: name.to_string(),
                    line,
                    entries: Vec::new(),
                });
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                errors.push(syntax(line, "expected `key = value` or `[section]`"));
                continue;
            };
            let key = key.trim();
            if key.is_empty() {
                errors.push(syntax(line, "missing key before `=`"));
                continue;
            }
            let value = unquote(value.trim());
            let Some(section) = doc.sections.last_mut() else {
                errors.push(syntax(line, &format!("key `{key}` appears before any section")));
                continue;
            };
            if let Some(prev) = section.entries.iter().find(|e| e.key == key) {
                errors.push(syntax(
                    line,
                    &format!("key `{key}` already set on line {}", prev.line),
                ));
                continue;
            }
            section.entries.push(Entry {
                key: key.to_string(),
                value: value.to_string(),
                line,
            });
        }
        if errors.is_empty() {
            Ok(doc)
        } else {
            Err(errors)
        }
    }

    pub fn section(&self, name: &str) -> Option<&Section> {
        self.sections.iter().find(|s| s.name == name)
    }
}

impl Section {
    pub fn get(&self, key: &str) -> Option<&Entry> {
        self.entries.iter().find(|e| e.key == key)
    }

    pub fn str(&self, key: &str) -> Option<&str> {
        self.get(key).map(|e| e.value.as_str())
    }

    pub fn f64(&self, key: &str) -> Result<Option<f64>> {
        self.get(key).map(|e| e.parse_f64()).transpose()
    }

    pub fn u64(&self, key: &str) -> Result<Option<u64>> {
        self.get(key)
            .map(|e| {
                e.value
                    .parse::<u64>()
                    .map_err(|_| e.error("expected a nonnegative integer"))
            })
            .transpose()
    }

    pub fn bool(&self, key: &str) -> Result<Option<bool>> {
        self.get(key)
            .map(|e| match e.value.as_str() {
                "true" | "yes" | "on" | "1" => Ok(true),
                "false" | "no" | "off" | "0" => Ok(false),
                _ => Err(e.error("expected true or false")),
            })
            .transpose()
    }

    pub fn f64_list(&self, key: &str) -> Result<Option<Vec<f64>>> {
        self.get(key).map(|e| e.parse_f64_list()).transpose()
    }
}

impl Entry {
    pub fn error(&self, message: &str) -> Error {
        Error::Syntax {
            line: self.line,
            message: format!("`{}`: {message}", self.key),
        }
    }

    pub fn parse_f64(&self) -> Result<f64> {
        parse_number(&self.value).ok_or_else(|| self.error("expected a number"))
    }

    pub fn parse_f64_list(&self) -> Result<Vec<f64>> {
        self.value
            .split(',')
            .map(|v| parse_number(v.trim()).ok_or_else(|| self.error("expected a comma-separated list of numbers")))
            .collect()
    }
}

/// Parses a number, accepting `inf`, `-inf` and `sqrt(<number>)`.
pub fn parse_number(s: &str) -> Option<f64> {
    let s = s.trim();
    if let Some(inner) = s.strip_prefix("sqrt(").and_then(|r| r.strip_suffix(')')) {
        return parse_number(inner).filter(|v| *v >= 0.0).map(f64::sqrt);
    }
    match s {
        "inf" | "+inf" | "infinity" => Some(f64::INFINITY),
        "-inf" | "-infinity" => Some(f64::NEG_INFINITY),
        _ => s.parse::<f64>().ok().filter(|v| !v.is_nan()),
    }
}

fn strip_comment(line: &str) -> &str {
    let mut in_quotes = false;
    for (i, c) in line.char_indices() {
        match c {
            '"' => in_quotes = !in_quotes,
            '#' | ';' if !in_quotes => return &line[..i],
            _ => {}
        }
    }
    line
}

fn unquote(s: &str) -> &str {
    s.strip_prefix('"')
        .and_then(|r| r.strip_suffix('"'))
        .unwrap_or(s)
}

fn syntax(line: usize, message: &str) -> Error {
    Error::Syntax {
        line,
        message: message.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sections_and_comments() {
        let doc = Document::parse(
            "# header\n[model]\nbuiltin = \"linear1d(theta=2)\" # trailing\n\n[sim]\neps = 0.1 ; note\nlist = 1, 2,3\n",
        )
        .unwrap();
        assert_eq!(doc.sections.len(), 2);
        let model = doc.section("model").unwrap();
        assert_eq!(model.str("builtin"), Some("linear1d(theta=2)"));
        let sim = doc.section("sim").unwrap();
        assert_eq!(sim.f64("eps").unwrap(), Some(0.1));
        assert_eq!(sim.f64_list("list").unwrap(), Some(vec![1.0, 2.0, 3.0]));
        assert_eq!(sim.get("eps").unwrap().line, 6);
    }

    #[test]
    fn collects_every_syntax_error() {
        let errs = Document::parse("orphan = 1\n[a\n[b]\nnonsense\nx = 1\nx = 2\n").unwrap_err();
        assert_eq!(errs.len(), 4);
        let lines: Vec<usize> = errs
            .iter()
            .map(|e| match e {
                Error::Syntax { line, .. } => *line,
                _ => 0,
            })
            .collect();
        assert_eq!(lines, vec![1, 2, 4, 6]);
    }

    #[test]
    fn special_numbers() {
        assert_eq!(parse_number("inf"), Some(f64::INFINITY));
        assert_eq!(parse_number("sqrt(4)"), Some(2.0));
        assert_eq!(parse_number("nan"), None);
        assert_eq!(parse_number("abc"), None);
    }
}
