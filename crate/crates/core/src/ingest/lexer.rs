//! A small, language-agnostic comment lexer driven by [`LanguageProfile`]s.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Span;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StringDelimiter {
    pub open: String,
    pub close: String,
    #[serde(default)]
    pub escape: Option<char>,
}

impl StringDelimiter {
    fn new(open: &str, close: &str, escape: Option<char>) -> Self {
        StringDelimiter {
            open: open.into(),
            close: close.into(),
            escape,
        }
    }
}

/// Comment and string syntax for one family of languages.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LanguageProfile {
    pub name: String,
    pub file_extensions: Vec<String>,
    #[serde(default)]
    pub line_comment_openers: Vec<String>,
    #[serde(default)]
    pub block_comment_pairs: Vec<(String, String)>,
    #[serde(default)]
    pub string_delimiters: Vec<StringDelimiter>,
}

impl LanguageProfile {
    pub fn c_family() -> Self {
        LanguageProfile {
            name: "c-family".into(),
            file_extensions: [
                "c", "h", "cc", "cpp", "cxx", "hh", "hpp", "java", "js", "jsx", "mjs", "ts", "tsx", "go", "scala",
                "kt", "kts", "cs", "swift", "groovy", "proto", "thrift",
            ]
            .map(String::from)
            .to_vec(),
            line_comment_openers: vec!["//".into()],
            block_comment_pairs: vec![("/*".into(), "*/".into())],
            string_delimiters: vec![
                StringDelimiter::new("\"", "\"", Some('\\')),
                StringDelimiter::new("'", "'", Some('\\')),
                StringDelimiter::new("`", "`", Some('\\')),
            ],
        }
    }

    /// Rust: like C, but `'` introduces lifetimes far more often than chars.
    pub fn rust() -> Self {
        LanguageProfile {
            name: "rust".into(),
            file_extensions: vec!["rs".into()],
            line_comment_openers: vec!["//".into()],
            block_comment_pairs: vec![("/*".into(), "*/".into())],
            string_delimiters: vec![StringDelimiter::new("\"", "\"", Some('\\'))],
        }
    }

    pub fn python_shell() -> Self {
        LanguageProfile {
            name: "python-shell".into(),
            file_extensions: ["py", "pyi", "sh", "bash", "zsh", "rb", "pl", "r", "yaml", "yml", "cmake"]
                .map(String::from)
                .to_vec(),
            line_comment_openers: vec!["#".into()],
            block_comment_pairs: vec![],
            string_delimiters: vec![
                StringDelimiter::new("\"\"\"", "\"\"\"", Some('\\')),
                StringDelimiter::new("'''", "'''", Some('\\')),
                StringDelimiter::new("\"", "\"", Some('\\')),
                StringDelimiter::new("'", "'", Some('\\')),
            ],
        }
    }

    pub fn sql() -> Self {
        LanguageProfile {
            name: "sql".into(),
            file_extensions: vec!["sql".into(), "hql".into()],
            line_comment_openers: vec!["--".into()],
            block_comment_pairs: vec![("/*".into(), "*/".into())],
            string_delimiters: vec![StringDelimiter::new("'", "'", None), StringDelimiter::new("\"", "\"", None)],
        }
    }

    pub fn lua() -> Self {
        LanguageProfile {
            name: "lua".into(),
            file_extensions: vec!["lua".into()],
            line_comment_openers: vec!["--".into()],
            block_comment_pairs: vec![("--[[".into(), "]]".into())],
            string_delimiters: vec![
                StringDelimiter::new("[[", "]]", None),
                StringDelimiter::new("\"", "\"", Some('\\')),
                StringDelimiter::new("'", "'", Some('\\')),
            ],
        }
    }

    fn matches_extension(&self, ext: &str) -> bool {
        self.file_extensions.iter().any(|e| e.eq_ignore_ascii_case(ext))
    }
}

/// A set of profiles with pairwise-disjoint extensions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProfileSet {
    #[serde(rename = "profile")]
    pub profiles: Vec<LanguageProfile>,
}

impl Default for ProfileSet {
    fn default() -> Self {
        ProfileSet {
            profiles: vec![
                LanguageProfile::c_family(),
                LanguageProfile::rust(),
                LanguageProfile::python_shell(),
                LanguageProfile::sql(),
                LanguageProfile::lua(),
            ],
        }
    }
}

impl ProfileSet {
    pub fn new(profiles: Vec<LanguageProfile>) -> Result<Self> {
        let set = ProfileSet { profiles };
        set.validate()?;
        Ok(set)
    }

    /// Parses a TOML document made of `[[profile]]` tables.
    pub fn from_toml(text: &str) -> Result<Self> {
        let set: ProfileSet = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for p in &self.profiles {
            for ext in &p.file_extensions {
                if !seen.insert(ext.to_ascii_lowercase()) {
                    return Err(Error::Config(format!(
                        "extension `{ext}` is claimed by more than one profile (last: {})",
                        p.name
                    )));
                }
            }
            let openers = p
                .line_comment_openers
                .iter()
                .chain(p.block_comment_pairs.iter().map(|(o, _)| o))
                .chain(p.string_delimiters.iter().map(|s| &s.open));
            if openers.clone().any(|o| o.is_empty()) {
                return Err(Error::Config(format!("profile {} has an empty opener", p.name)));
            }
        }
        Ok(())
    }

    pub fn for_path(&self, path: &str) -> Option<&LanguageProfile> {
        let ext = Path::new(path).extension()?.to_str()?;
        self.profiles.iter().find(|p| p.matches_extension(ext))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Comment {
    /// Comment body with markers stripped; merged blocks keep their line breaks.
    pub text: String,
    /// Byte range of the whole comment including its markers.
    pub span: Span,
    /// Set when a block comment ran to end of input without its closer.
    pub unterminated: bool,
}

enum Token<'p> {
    Line(&'p str),
    Block(&'p str, &'p str),
    Str(&'p StringDelimiter),
}

/// Extracts comments from `source` in document order.
///
/// String literal contents are skipped. Line comments on consecutive lines with
/// nothing but whitespace between them are merged into one block. Comments
/// whose body is empty after stripping markers are dropped.
pub fn extract_comments(source: &str, profile: &LanguageProfile) -> Vec<Comment> {
    let mut tokens: Vec<(&str, Token<'_>)> = Vec::new();
    for op in &profile.line_comment_openers {
        tokens.push((op, Token::Line(op)));
    }
    for (open, close) in &profile.block_comment_pairs {
        tokens.push((open, Token::Block(open, close)));
    }
    for d in &profile.string_delimiters {
        tokens.push((&d.open, Token::Str(d)));
    }
    // Longest opener wins, so `"""` beats `"` and `--[[` beats `--`.
    tokens.sort_by(|a, b| b.0.len().cmp(&a.0.len()));

    let mut out: Vec<Comment> = Vec::new();
    // Whether the last entry of `out` is a line comment that may absorb the next one.
    let mut last_mergeable = false;
    let bytes = source.as_bytes();
    let mut i = 0;
    'scan: while i < bytes.len() {
        let rest = &source[i..];
        for (opener, token) in &tokens {
            if !rest.starts_with(opener) {
                continue;
            }
            match token {
                Token::Line(op) => {
                    let body_start = i + op.len();
                    let end = source[body_start..].find('\n').map_or(source.len(), |n| body_start + n);
                    let body = strip_line_marker(&source[body_start..end], op);
                    let prev_end = out.last().map(|c| c.span.end);
                    let merge = last_mergeable
                        && prev_end.is_some_and(|pe| {
                            let gap = &source[pe..i];
                            gap.chars().all(char::is_whitespace) && gap.matches('\n').count() == 1
                        });
                    if merge {
                        let prev = out.last_mut().expect("checked above");
                        prev.text.push('\n');
                        prev.text.push_str(&body);
                        prev.span.end = end;
                    } else {
                        out.push(Comment {
                            text: body,
                            span: Span::new(i, end),
                            unterminated: false,
                        });
                    }
                    last_mergeable = true;
                    i = end;
                }
                Token::Block(open, close) => {
                    let body_start = i + open.len();
                    let (body_end, end, unterminated) = match source[body_start..].find(close) {
                        Some(n) => (body_start + n, body_start + n + close.len(), false),
                        None => (source.len(), source.len(), true),
                    };
                    out.push(Comment {
                        text: strip_block(&source[body_start..body_end]),
                        span: Span::new(i, end),
                        unterminated,
                    });
                    last_mergeable = false;
                    i = end;
                }
                Token::Str(d) => {
                    i = skip_string(source, i + d.open.len(), d);
                }
            }
            continue 'scan;
        }
        if !bytes[i].is_ascii_whitespace() {
            last_mergeable = false;
        }
        i += rest.chars().next().map_or(1, char::len_utf8);
    }
    out.retain(|c| !c.text.trim().is_empty());
    for c in &mut out {
        c.text = c.text.trim().to_string();
    }
    out
}

fn skip_string(source: &str, mut i: usize, d: &StringDelimiter) -> usize {
    while i < source.len() {
        let rest = &source[i..];
        if let Some(esc) = d.escape {
            if rest.starts_with(esc) {
                i += esc.len_utf8();
                i += source[i..].chars().next().map_or(0, char::len_utf8);
                continue;
            }
        }
        if rest.starts_with(d.close.as_str()) {
            return i + d.close.len();
        }
        i += rest.chars().next().map_or(1, char::len_utf8);
    }
    source.len()
}

fn strip_line_marker(body: &str, opener: &str) -> String {
    let repeated = opener.chars().last().unwrap_or(' ');
    body.trim_start_matches(repeated)
        .trim_start_matches('!')
        .trim_end_matches('\r')
        .trim()
        .to_string()
}

fn strip_block(body: &str) -> String {
    let body = body.strip_prefix(['*', '!']).unwrap_or(body);
    body.lines()
        .map(|l| {
            let l = l.trim();
            l.trim_start_matches('*').trim()
        })
        .collect::<Vec<_>>()
        .join("\n")
        .trim()
        .to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn texts(src: &str, p: &LanguageProfile) -> Vec<String> {
        extract_comments(src, p).into_iter().map(|c| c.text).collect()
    }

    #[test]
    fn trailing_line_comment() {
        let src = "x = 1 // TODO fix";
        let c = extract_comments(src, &LanguageProfile::c_family());
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].text, "TODO fix");
        assert_eq!(&src[c[0].span.start..c[0].span.end], "// TODO fix");
    }

    #[test]
    fn string_contents_are_not_comments() {
        assert!(texts(r#"s = "// not a comment""#, &LanguageProfile::c_family()).is_empty());
        assert!(texts(r#"s = "esc \" // still string""#, &LanguageProfile::c_family()).is_empty());
        assert!(texts("s = '# nope'\n", &LanguageProfile::python_shell()).is_empty());
    }

    #[test]
    fn two_block_comments_around_code() {
        let src = "/* a */ code /* b */";
        let c = extract_comments(src, &LanguageProfile::c_family());
        assert_eq!(c.iter().map(|c| c.text.as_str()).collect::<Vec<_>>(), ["a", "b"]);
        assert_eq!(c[0].span, Span::new(0, 7));
        assert_eq!(c[1].span, Span::new(13, 20));
    }

    #[test]
    fn consecutive_line_comments_merge() {
        let src = "// first\n   // second\nint x; // third\n// fourth\n\n// fifth";
        let got = texts(src, &LanguageProfile::c_family());
        assert_eq!(got, ["first\nsecond", "third\nfourth", "fifth"]);
    }

    #[test]
    fn code_between_lines_breaks_the_block() {
        let src = "int a; // one\nint b; // two";
        assert_eq!(texts(src, &LanguageProfile::c_family()), ["one", "two"]);
    }

    #[test]
    fn javadoc_stars_are_stripped() {
        let src = "/**\n * TODO: remove\n * later\n */\nclass A {}";
        assert_eq!(texts(src, &LanguageProfile::c_family()), ["TODO: remove\nlater"]);
    }

    #[test]
    fn unterminated_block_runs_to_eof() {
        let src = "a(); /* FIXME never closed\nb();";
        let c = extract_comments(src, &LanguageProfile::c_family());
        assert_eq!(c.len(), 1);
        assert!(c[0].unterminated);
        assert_eq!(c[0].span.end, src.len());
    }

    #[test]
    fn python_triple_quotes_are_strings() {
        let src = "def f():\n    \"\"\"# not a comment\n    \"\"\"\n    return 1  # hack\n";
        assert_eq!(texts(src, &LanguageProfile::python_shell()), ["hack"]);
    }

    #[test]
    fn lua_long_comment_beats_line_comment() {
        let src = "--[[ long\ncomment ]] x = 1 -- short";
        assert_eq!(texts(src, &LanguageProfile::lua()), ["long\ncomment", "short"]);
    }

    #[test]
    fn sql_dash_comments() {
        assert_eq!(texts("SELECT 1; -- TODO index\n", &LanguageProfile::sql()), ["TODO index"]);
    }

    #[test]
    fn empty_markers_are_dropped() {
        assert!(texts("//\n//   \nx", &LanguageProfile::c_family()).is_empty());
    }

    #[test]
    fn multibyte_text_is_handled() {
        let src = "let s = \"héllo\"; // naïve ✓";
        assert_eq!(texts(src, &LanguageProfile::c_family()), ["naïve ✓"]);
    }

    #[test]
    fn default_profiles_are_disjoint() {
        ProfileSet::default().validate().unwrap();
        let set = ProfileSet::default();
        assert_eq!(set.for_path("src/A.java").unwrap().name, "c-family");
        assert_eq!(set.for_path("x.py").unwrap().name, "python-shell");
        assert!(set.for_path("README").is_none());
    }

    #[test]
    fn overlapping_extensions_are_rejected() {
        let mut a = LanguageProfile::c_family();
        a.name = "dup".into();
        assert!(ProfileSet::new(vec![LanguageProfile::c_family(), a]).is_err());
    }

    #[test]
    fn profiles_parse_from_toml() {
        let text = r#"
            [[profile]]
            name = "c"
            file_extensions = ["c"]
            line_comment_openers = ["//"]
            block_comment_pairs = [["/*", "*/"]]
            string_delimiters = [{ open = '"', close = '"', escape = '\' }]
        "#;
        let set = ProfileSet::from_toml(text).unwrap();
        assert_eq!(set.profiles[0].string_delimiters[0].escape, Some('\\'));
        assert_eq!(texts("x /* y */", &set.profiles[0]), ["y"]);
    }
}
