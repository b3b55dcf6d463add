//! Plain-text `key = value` documents with dotted keys.
//!
//! ```text
//! # comment
//! epochs = 50
//! optim.adam.eta = 0.001
//! ```
//!
//! Keys are ASCII letters, digits, `_`, `-` and `.`; values run to the end of
//! the line and are trimmed. Duplicate keys are rejected. Entry order is kept
//! so that rendering a parsed document reproduces it.

use std::fmt::Write as _;
use std::str::FromStr;

#[derive(Debug, thiserror::Error, PartialEq)]
#[error("line {line}: {message}")]
pub struct KvError {
    /// 1-based line number, 0 when the error is not tied to a line.
    pub line: usize,
    pub message: String,
}

impl KvError {
    pub fn new(line: usize, message: impl Into<String>) -> Self {
        KvError {
            line,
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub key: String,
    pub value: String,
    pub line: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct KvDoc {
    entries: Vec<Entry>,
}

fn valid_key(key: &str) -> bool {
    !key.is_empty()
        && key
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
        && !key.starts_with('.')
        && !key.ends_with('.')
        && !key.contains("..")
}

impl KvDoc {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn parse(text: &str) -> Result<Self, KvError> {
        let mut doc = KvDoc::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| KvError::new(line_no, format!("expected `key = value`, found {line:?}")))?;
            let key = key.trim();
            if !valid_key(key) {
                return Err(KvError::new(line_no, format!("invalid key {key:?}")));
            }
            if doc.get(key).is_some() {
                return Err(KvError::new(line_no, format!("duplicate key {key:?}")));
            }
            doc.entries.push(Entry {
                key: key.to_string(),
                value: value.trim().to_string(),
                line: line_no,
            });
        }
        Ok(doc)
    }

    pub fn entries(&self) -> &[Entry] {
        &self.entries
    }

    pub fn entry(&self, key: &str) -> Option<&Entry> {
        self.entries.iter().find(|e| e.key == key)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entry(key).map(|e| e.value.as_str())
    }

    /// Appends an entry. Panics on invalid or duplicate keys, which are
    /// programming errors on the writing side.
    pub fn push(&mut self, key: impl Into<String>, value: impl ToString) {
        let key = key.into();
        assert!(valid_key(&key), "invalid key {key:?}");
        assert!(self.get(&key).is_none(), "duplicate key {key:?}");
        let value = value.to_string();
        assert!(!value.contains('\n'), "multi-line value for {key:?}");
        self.entries.push(Entry { key, value, line: 0 });
    }

    pub fn push_f64(&mut self, key: impl Into<String>, value: f64) {
        self.push(key, fmt_f64(value));
    }

    pub fn push_list<T: ToString>(&mut self, key: impl Into<String>, values: &[T]) {
        let joined = values.iter().map(ToString::to_string).collect::<Vec<_>>().join(",");
        self.push(key, joined);
    }

    pub fn push_f64_list(&mut self, key: impl Into<String>, values: &[f64]) {
        let joined = values.iter().map(|&v| fmt_f64(v)).collect::<Vec<_>>().join(",");
        self.push(key, joined);
    }

    /// Entries whose key starts with `prefix.`, with the prefix stripped.
    pub fn section<'a>(&'a self, prefix: &'a str) -> impl Iterator<Item = (&'a str, &'a Entry)> + 'a {
        self.entries.iter().filter_map(move |e| {
            e.key
                .strip_prefix(prefix)
                .and_then(|rest| rest.strip_prefix('.'))
                .map(|rest| (rest, e))
        })
    }

    pub fn required(&self, key: &str) -> Result<&Entry, KvError> {
        self.entry(key)
            .ok_or_else(|| KvError::new(0, format!("missing key {key:?}")))
    }

    /// Parses the value under `key`, citing the entry's line on failure.
    pub fn parse_value<T: FromStr>(&self, key: &str) -> Result<T, KvError>
    where
        T::Err: std::fmt::Display,
    {
        let e = self.required(key)?;
        parse_entry(e)
    }

    pub fn parse_list<T: FromStr>(&self, key: &str) -> Result<Vec<T>, KvError>
    where
        T::Err: std::fmt::Display,
    {
        let e = self.required(key)?;
        parse_list_entry(e)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            if e.value.is_empty() {
                let _ = writeln!(out, "{} =", e.key);
            } else {
                let _ = writeln!(out, "{} = {}", e.key, e.value);
            }
        }
        out
    }
}

pub fn parse_entry<T: FromStr>(e: &Entry) -> Result<T, KvError>
where
    T::Err: std::fmt::Display,
{
    e.value
        .parse::<T>()
        .map_err(|err| KvError::new(e.line, format!("{}: cannot parse {:?}: {err}", e.key, e.value)))
}

pub fn parse_list_entry<T: FromStr>(e: &Entry) -> Result<Vec<T>, KvError>
where
    T::Err: std::fmt::Display,
{
    if e.value.is_empty() {
        return Ok(Vec::new());
    }
    e.value
        .split(',')
        .map(|item| {
            item.trim()
                .parse::<T>()
                .map_err(|err| KvError::new(e.line, format!("{}: cannot parse {:?}: {err}", e.key, item.trim())))
        })
        .collect()
}

/// Shortest representation that parses back to the same `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_comments_and_dotted_keys() {
        let doc = KvDoc::parse("# header\n\nepochs = 50\noptim.adam.eta=0.001\nnames = a b, c\n").unwrap();
        assert_eq!(doc.get("epochs"), Some("50"));
        assert_eq!(doc.parse_value::<f64>("optim.adam.eta").unwrap(), 0.001);
        assert_eq!(doc.parse_list::<String>("names").unwrap(), vec!["a b", "c"]);
        let adam: Vec<_> = doc.section("optim.adam").map(|(k, _)| k).collect();
        assert_eq!(adam, vec!["eta"]);
    }

    #[test]
    fn errors_cite_lines() {
        let err = KvDoc::parse("a = 1\nnot a pair\n").unwrap_err();
        assert_eq!(err.line, 2);
        let err = KvDoc::parse("a = 1\n\na = 2\n").unwrap_err();
        assert_eq!(err.line, 3);
        let doc = KvDoc::parse("x = 1\ny = nope\n").unwrap();
        assert_eq!(doc.parse_value::<f64>("y").unwrap_err().line, 2);
        assert!(KvDoc::parse("bad key = 1").is_err());
    }

    #[test]
    fn render_round_trips() {
        let mut doc = KvDoc::new();
        doc.push("tool.version", "0.1.0");
        doc.push_f64("eps", 1e-7);
        doc.push_f64_list("grid", &[0.001, 0.01, 0.1]);
        doc.push("empty", "");
        let text = doc.render();
        let back = KvDoc::parse(&text).unwrap();
        assert_eq!(back.render(), text);
        assert_eq!(back.parse_value::<f64>("eps").unwrap(), 1e-7);
        assert_eq!(back.parse_list::<f64>("empty").unwrap(), Vec::<f64>::new());
    }

    proptest! {
        #[test]
        fn f64_text_round_trips(v in any::<f64>().prop_filter("finite", |v| v.is_finite())) {
            prop_assert_eq!(fmt_f64(v).parse::<f64>().unwrap().to_bits(), v.to_bits());
        }
    }
}
