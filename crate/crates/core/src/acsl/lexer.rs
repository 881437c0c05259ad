//! A small C lexer that knows just enough to find ACSL comments, function
//! bodies and loop statements.

use super::AcslError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum TokKind {
    Ident,
    Punct(u8),
    Literal,
    /// `/*@ ... */` or `//@ ...`; `block` tells which.
    Acsl { block: bool },
    Comment,
    Directive,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Tok {
    pub kind: TokKind,
    pub start: usize,
    pub end: usize,
}

impl Tok {
    pub fn is_trivia(&self) -> bool {
        matches!(self.kind, TokKind::Comment | TokKind::Directive)
    }

    pub fn is_punct(&self, c: u8) -> bool {
        self.kind == TokKind::Punct(c)
    }
}

/// Byte offset to 1-based line lookup.
pub(crate) struct LineIndex {
    starts: Vec<usize>,
}

impl LineIndex {
    pub fn new(src: &str) -> Self {
        let mut starts = vec![0];
        starts.extend(src.bytes().enumerate().filter(|(_, b)| *b == b'\n').map(|(i, _)| i + 1));
        LineIndex { starts }
    }

    pub fn line(&self, offset: usize) -> u32 {
        match self.starts.binary_search(&offset) {
            Ok(i) => i as u32 + 1,
            Err(i) => i as u32,
        }
    }
}

pub(crate) fn lex(src: &str) -> Result<Vec<Tok>, AcslError> {
    let bytes = src.as_bytes();
    let lines = LineIndex::new(src);
    let mut toks = Vec::new();
    let mut i = 0;
    let mut line_start = true;
    while i < bytes.len() {
        let b = bytes[i];
        if b == b'\n' {
            line_start = true;
            i += 1;
            continue;
        }
        if b.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        let kind = match b {
            b'#' if line_start => {
                while i < bytes.len() && bytes[i] != b'\n' {
                    if bytes[i] == b'\\' && bytes.get(i + 1) == Some(&b'\n') {
                        i += 1;
                    }
                    i += 1;
                }
                TokKind::Directive
            }
            b'/' if bytes.get(i + 1) == Some(&b'*') => {
                let acsl = bytes.get(i + 2) == Some(&b'@');
                match src[i + 2..].find("*/") {
                    Some(rel) => i = i + 2 + rel + 2,
                    None => {
                        return Err(AcslError::MalformedAnnotation {
                            reason: "unterminated comment".into(),
                            line: lines.line(start),
                        })
                    }
                }
                if acsl {
                    TokKind::Acsl { block: true }
                } else {
                    TokKind::Comment
                }
            }
            b'/' if bytes.get(i + 1) == Some(&b'/') => {
                let acsl = bytes.get(i + 2) == Some(&b'@');
                while i < bytes.len() && bytes[i] != b'\n' {
                    i += 1;
                }
                if acsl {
                    TokKind::Acsl { block: false }
                } else {
                    TokKind::Comment
                }
            }
            b'"' | b'\'' => {
                i = skip_quoted(bytes, i);
                TokKind::Literal
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                TokKind::Ident
            }
            c if c.is_ascii_digit() => {
                while i < bytes.len()
                    && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_' || bytes[i] == b'.')
                {
                    i += 1;
                }
                TokKind::Literal
            }
            c if c.is_ascii() => {
                i += 1;
                TokKind::Punct(c)
            }
            _ => {
                // Non-ASCII outside comments and literals: skip the whole char.
                let ch = src[i..].chars().next().map_or(1, char::len_utf8);
                i += ch;
                line_start = false;
                continue;
            }
        };
        line_start = false;
        toks.push(Tok { kind, start, end: i });
    }
    Ok(toks)
}

/// Skips a string or character literal starting at `i`. Unterminated
/// literals stop at the end of the line.
pub(crate) fn skip_quoted(bytes: &[u8], mut i: usize) -> usize {
    let quote = bytes[i];
    i += 1;
    while i < bytes.len() {
        match bytes[i] {
            b'\\' => i += 2,
            b'\n' => return i,
            c if c == quote => return i + 1,
            _ => i += 1,
        }
    }
    bytes.len()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kinds(src: &str) -> Vec<TokKind> {
        lex(src).unwrap().into_iter().map(|t| t.kind).collect()
    }

    #[test]
    fn separates_acsl_from_plain_comments() {
        let k = kinds("/*@ requires x; */ /* plain */ //@ ensures y;\n// note\nint");
        assert_eq!(
            k,
            vec![
                TokKind::Acsl { block: true },
                TokKind::Comment,
                TokKind::Acsl { block: false },
                TokKind::Comment,
                TokKind::Ident
            ]
        );
    }

    #[test]
    fn comment_markers_inside_strings_are_ignored() {
        let k = kinds("char *s = \"/*@ no */\";");
        assert!(!k.iter().any(|k| matches!(k, TokKind::Acsl { .. })));
    }

    #[test]
    fn directives_span_continuations() {
        let toks = lex("#define X \\\n  1\nint x;").unwrap();
        assert_eq!(toks[0].kind, TokKind::Directive);
        assert_eq!(toks[1].kind, TokKind::Ident);
    }

    #[test]
    fn unterminated_comment_is_malformed() {
        assert!(matches!(
            lex("int x; /*@ requires x;"),
            Err(AcslError::MalformedAnnotation { line: 1, .. })
        ));
    }

    #[test]
    fn line_index() {
        let idx = LineIndex::new("a\nbc\n\nd");
        assert_eq!(idx.line(0), 1);
        assert_eq!(idx.line(2), 2);
        assert_eq!(idx.line(3), 2);
        assert_eq!(idx.line(5), 3);
        assert_eq!(idx.line(6), 4);
    }
}
