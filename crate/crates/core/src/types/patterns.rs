use regex::{Regex, RegexBuilder};
use thiserror::Error;

/// How a pattern's source is interpreted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatchMode {
    /// The source is a regular expression.
    Regex,
    /// The source is a literal substring (compiled as an escaped regex).
    Substring,
}

impl MatchMode {
    fn keyword(self) -> &'static str {
        match self {
            MatchMode::Regex => "re",
            MatchMode::Substring => "sub",
        }
    }
}

#[derive(Debug, Error)]
pub enum PatternError {
    #[error("{set}: line {line}: expected `mode:flags:pattern`, got `{text}`")]
    Malformed { set: String, line: usize, text: String },
    #[error("{set}: line {line}: unknown mode `{mode}` (expected `re` or `sub`)")]
    UnknownMode { set: String, line: usize, mode: String },
    #[error("{set}: line {line}: unknown flag `{flag}` (expected `i` or `w=<weight>`)")]
    UnknownFlag { set: String, line: usize, flag: String },
    #[error("{set}: line {line}: weight `{value}` is not a finite non-negative number")]
    BadWeight { set: String, line: usize, value: String },
    #[error("{set}: line {line}: empty pattern")]
    EmptyPattern { set: String, line: usize },
    #[error("{set}: pattern `{id}` does not compile: {source}")]
    BadRegex {
        set: String,
        id: String,
        #[source]
        source: Box<regex::Error>,
    },
    #[error("{set}: duplicate pattern id `{id}`")]
    DuplicateId { set: String, id: String },
    #[error("{set}: pattern `{id}` has no weight; every pattern in a weighted set needs a `w=` flag")]
    MissingWeight { set: String, id: String },
    #[error("{set}: set has no patterns")]
    Empty { set: String },
}

/// One matchable pattern: id, source, mode, flags, and the compiled regex.
#[derive(Debug, Clone)]
pub struct PatternSpec {
    id: String,
    mode: MatchMode,
    case_insensitive: bool,
    source: String,
    weight: Option<f64>,
    compiled: Regex,
}

impl PatternSpec {
    pub fn new(
        set: &str,
        id: impl Into<String>,
        mode: MatchMode,
        case_insensitive: bool,
        source: impl Into<String>,
        weight: Option<f64>,
    ) -> Result<Self, PatternError> {
        let id = id.into();
        let source = source.into();
        let compiled = compile(set, &id, mode, case_insensitive, &source)?;
        Ok(PatternSpec {
            id,
            mode,
            case_insensitive,
            source,
            weight,
            compiled,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn mode(&self) -> MatchMode {
        self.mode
    }

    pub fn case_insensitive(&self) -> bool {
        self.case_insensitive
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn weight(&self) -> Option<f64> {
        self.weight
    }

    /// Non-overlapping match count (leftmost-first, same as iterating the
    /// compiled regex).
    pub fn count_matches(&self, text: &str) -> usize {
        self.compiled.find_iter(text).count()
    }

    pub fn is_present(&self, text: &str) -> bool {
        self.compiled.is_match(text)
    }

    /// Byte span of the first match, if any.
    pub fn first_span(&self, text: &str) -> Option<(usize, usize)> {
        self.compiled.find(text).map(|m| (m.start(), m.end()))
    }

    /// Serializes back to the `mode:flags:pattern` line format.
    pub fn to_line(&self) -> String {
        let mut flags = Vec::new();
        if self.case_insensitive {
            flags.push("i".to_owned());
        }
        if let Some(w) = self.weight {
            flags.push(format!("w={w}"));
        }
        format!("{}:{}:{}", self.mode.keyword(), flags.join(","), self.source)
    }
}

fn compile(
    set: &str,
    id: &str,
    mode: MatchMode,
    case_insensitive: bool,
    source: &str,
) -> Result<Regex, PatternError> {
    let expr = match mode {
        MatchMode::Regex => source.to_owned(),
        MatchMode::Substring => regex::escape(source),
    };
    RegexBuilder::new(&expr)
        .case_insensitive(case_insensitive)
        .build()
        .map_err(|e| PatternError::BadRegex {
            set: set.to_owned(),
            id: id.to_owned(),
            source: Box::new(e),
        })
}

/// A named, ordered collection of patterns with unique ids.
///
/// The text form is line-oriented: `mode:flags:pattern`, where mode is `re`
/// (regex) or `sub` (literal substring), flags is a possibly-empty
/// comma-separated list of `i` (case-insensitive) and `w=<weight>`, and the
/// rest of the line after the second `:` is the pattern itself (so patterns
/// may contain colons). Blank lines and lines starting with `#` are skipped.
#[derive(Debug, Clone)]
pub struct PatternSet {
    id: String,
    patterns: Vec<PatternSpec>,
}

impl PatternSet {
    /// Builds a set from already-constructed specs, rejecting duplicate ids
    /// and empty sets.
    pub fn new(id: impl Into<String>, patterns: Vec<PatternSpec>) -> Result<Self, PatternError> {
        let id = id.into();
        if patterns.is_empty() {
            return Err(PatternError::Empty { set: id });
        }
        for (i, p) in patterns.iter().enumerate() {
            if patterns[..i].iter().any(|q| q.id() == p.id()) {
                return Err(PatternError::DuplicateId {
                    set: id,
                    id: p.id().to_owned(),
                });
            }
        }
        Ok(PatternSet { id, patterns })
    }

    /// Parses the line format. Pattern ids are assigned as `<set>/<n>` with
    /// `n` the 1-based position among patterns (comments and blanks do not
    /// shift ids).
    pub fn parse(id: impl Into<String>, text: &str) -> Result<Self, PatternError> {
        let set_id = id.into();
        let mut patterns = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let lineno = lineno + 1;
            let mut parts = line.splitn(3, ':');
            let (mode_s, flags_s, pattern) = match (parts.next(), parts.next(), parts.next()) {
                (Some(m), Some(f), Some(p)) => (m, f, p),
                _ => {
                    return Err(PatternError::Malformed {
                        set: set_id,
                        line: lineno,
                        text: line.to_owned(),
                    })
                }
            };
            let mode = match mode_s {
                "re" => MatchMode::Regex,
                "sub" => MatchMode::Substring,
                other => {
                    return Err(PatternError::UnknownMode {
                        set: set_id,
                        line: lineno,
                        mode: other.to_owned(),
                    })
                }
            };
            let mut case_insensitive = false;
            let mut weight = None;
            for flag in flags_s.split(',').map(str::trim).filter(|f| !f.is_empty()) {
                if flag == "i" {
                    case_insensitive = true;
                } else if let Some(value) = flag.strip_prefix("w=") {
                    let parsed: f64 = value.parse().map_err(|_| PatternError::BadWeight {
                        set: set_id.clone(),
                        line: lineno,
                        value: value.to_owned(),
                    })?;
                    if !parsed.is_finite() || parsed < 0.0 {
                        return Err(PatternError::BadWeight {
                            set: set_id,
                            line: lineno,
                            value: value.to_owned(),
                        });
                    }
                    weight = Some(parsed);
                } else {
                    return Err(PatternError::UnknownFlag {
                        set: set_id,
                        line: lineno,
                        flag: flag.to_owned(),
                    });
                }
            }
            if pattern.is_empty() {
                return Err(PatternError::EmptyPattern {
                    set: set_id,
                    line: lineno,
                });
            }
            let pattern_id = format!("{}/{}", set_id, patterns.len() + 1);
            patterns.push(PatternSpec::new(
                &set_id,
                pattern_id,
                mode,
                case_insensitive,
                pattern,
                weight,
            )?);
        }
        PatternSet::new(set_id, patterns)
    }

    /// Reads and parses a pattern file; the set id defaults to the file stem.
    pub fn load(path: &std::path::Path) -> Result<Self, crate::Error> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| crate::Error::io(path.display().to_string(), e))?;
        let id = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "patterns".to_owned());
        Ok(PatternSet::parse(id, &text)?)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn patterns(&self) -> &[PatternSpec] {
        &self.patterns
    }

    pub fn len(&self) -> usize {
        self.patterns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patterns.is_empty()
    }

    pub fn get(&self, pattern_id: &str) -> Option<&PatternSpec> {
        self.patterns.iter().find(|p| p.id() == pattern_id)
    }

    /// Fails unless every pattern carries a weight. Weighted features call
    /// this at configuration time so a missing weight is a load error, not a
    /// scoring-time surprise.
    pub fn require_weights(&self) -> Result<(), PatternError> {
        for p in &self.patterns {
            if p.weight().is_none() {
                return Err(PatternError::MissingWeight {
                    set: self.id.clone(),
                    id: p.id().to_owned(),
                });
            }
        }
        Ok(())
    }

    /// Returns a new set with one pattern appended; the receiver is not
    /// modified. The new id continues the `<set>/<n>` sequence.
    pub fn with_appended(
        &self,
        mode: MatchMode,
        case_insensitive: bool,
        source: &str,
        weight: Option<f64>,
    ) -> Result<Self, PatternError> {
        let pattern_id = format!("{}/{}", self.id, self.patterns.len() + 1);
        let spec = PatternSpec::new(&self.id, pattern_id, mode, case_insensitive, source, weight)?;
        let mut patterns = self.patterns.clone();
        patterns.push(spec);
        PatternSet::new(self.id.clone(), patterns)
    }

    /// Serializes the whole set back to the line format.
    pub fn to_file_text(&self) -> String {
        let mut out = String::new();
        for p in &self.patterns {
            out.push_str(&p.to_line());
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_modes_flags_and_comments() {
        let text = "\
# leading comment
sub:i:ignore previous instructions

re::\\b[A-Z]{3,}\\b
sub:i,w=0.5:for academic purposes
";
        let set = PatternSet::parse("demo", text).unwrap();
        assert_eq!(set.len(), 3);
        let p = &set.patterns()[0];
        assert_eq!(p.id(), "demo/1");
        assert_eq!(p.mode(), MatchMode::Substring);
        assert!(p.case_insensitive());
        assert!(p.is_present("Please IGNORE Previous Instructions now"));

        let caps = &set.patterns()[1];
        assert_eq!(caps.mode(), MatchMode::Regex);
        assert!(!caps.case_insensitive());
        assert!(caps.is_present("the HEX code"));
        assert!(!caps.is_present("the hex code"));

        let weighted = &set.patterns()[2];
        assert_eq!(weighted.weight(), Some(0.5));
    }

    #[test]
    fn pattern_may_contain_colons() {
        let set = PatternSet::parse("demo", "sub::note: override").unwrap();
        assert_eq!(set.patterns()[0].source(), "note: override");
        assert!(set.patterns()[0].is_present("a note: override here"));
    }

    #[test]
    fn substring_mode_escapes_metacharacters() {
        let set = PatternSet::parse("demo", "sub::a.b*c").unwrap();
        assert!(set.patterns()[0].is_present("xx a.b*c yy"));
        assert!(!set.patterns()[0].is_present("aXbbc"));
    }

    #[test]
    fn count_matches_is_non_overlapping() {
        let set = PatternSet::parse("demo", "sub::aa").unwrap();
        assert_eq!(set.patterns()[0].count_matches("aaaa"), 2);
        assert_eq!(set.patterns()[0].count_matches("aaa"), 1);
    }

    #[test]
    fn first_span_is_byte_offsets() {
        let set = PatternSet::parse("demo", "sub:i:urgent").unwrap();
        assert_eq!(set.patterns()[0].first_span("so URGENT!"), Some((3, 9)));
        assert_eq!(set.patterns()[0].first_span("calm"), None);
    }

    #[test]
    fn rejects_malformed_lines() {
        assert!(matches!(
            PatternSet::parse("demo", "sub:ignore this").unwrap_err(),
            PatternError::Malformed { line: 1, .. }
        ));
        assert!(matches!(
            PatternSet::parse("demo", "glob::*foo*").unwrap_err(),
            PatternError::UnknownMode { .. }
        ));
        assert!(matches!(
            PatternSet::parse("demo", "sub:x:foo").unwrap_err(),
            PatternError::UnknownFlag { .. }
        ));
        assert!(matches!(
            PatternSet::parse("demo", "sub:w=heavy:foo").unwrap_err(),
            PatternError::BadWeight { .. }
        ));
        assert!(matches!(
            PatternSet::parse("demo", "sub:w=-1:foo").unwrap_err(),
            PatternError::BadWeight { .. }
        ));
        assert!(matches!(
            PatternSet::parse("demo", "re::[unclosed").unwrap_err(),
            PatternError::BadRegex { .. }
        ));
        assert!(matches!(
            PatternSet::parse("demo", "sub::").unwrap_err(),
            PatternError::EmptyPattern { .. }
        ));
        assert!(matches!(
            PatternSet::parse("demo", "# only comments\n").unwrap_err(),
            PatternError::Empty { .. }
        ));
    }

    #[test]
    fn ids_skip_comments_and_blanks() {
        let set = PatternSet::parse("s", "# c\nsub::one\n\n# c\nsub::two\n").unwrap();
        assert_eq!(set.patterns()[0].id(), "s/1");
        assert_eq!(set.patterns()[1].id(), "s/2");
        assert!(set.get("s/2").is_some());
        assert!(set.get("s/3").is_none());
    }

    #[test]
    fn require_weights_flags_unweighted_patterns() {
        let set = PatternSet::parse("w", "sub:w=0.5:a\nsub::b\n").unwrap();
        let err = set.require_weights().unwrap_err();
        assert!(matches!(err, PatternError::MissingWeight { ref id, .. } if id == "w/2"));
        let ok = PatternSet::parse("w", "sub:w=0.5:a\nsub:w=0.3:b\n").unwrap();
        ok.require_weights().unwrap();
    }

    #[test]
    fn with_appended_leaves_original_untouched() {
        let set = PatternSet::parse("s", "sub::one\n").unwrap();
        let bigger = set
            .with_appended(MatchMode::Substring, true, "two", None)
            .unwrap();
        assert_eq!(set.len(), 1);
        assert_eq!(bigger.len(), 2);
        assert_eq!(bigger.patterns()[1].id(), "s/2");
        assert!(bigger
            .with_appended(MatchMode::Regex, false, "[bad", None)
            .is_err());
    }

    #[test]
    fn line_format_roundtrips() {
        let text = "sub:i:ignore previous instructions\nre::\\b[A-Z]{3,}\\b\nsub:i,w=0.5:for academic purposes\n";
        let set = PatternSet::parse("demo", text).unwrap();
        let emitted = set.to_file_text();
        let reparsed = PatternSet::parse("demo", &emitted).unwrap();
        assert_eq!(reparsed.len(), set.len());
        for (a, b) in set.patterns().iter().zip(reparsed.patterns()) {
            assert_eq!(a.id(), b.id());
            assert_eq!(a.source(), b.source());
            assert_eq!(a.mode(), b.mode());
            assert_eq!(a.case_insensitive(), b.case_insensitive());
            assert_eq!(a.weight(), b.weight());
        }
    }
}
