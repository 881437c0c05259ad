use super::lexer::{skip_quoted, LineIndex};
use super::outline::{outline, AcslSite, Placement};
use super::{classify_construct, normalize_text, AcslError, Anchor, Annotation, ConstructKind, SourceSpan, SpecificationSet};

const DEFAULT_FILE: &str = "<input>";

/// Parses every ACSL annotation in `src`, failing on the first annotation
/// that is malformed or outside the supported constructs.
pub fn parse_annotations(src: &str) -> Result<SpecificationSet, AcslError> {
    parse_annotations_in(DEFAULT_FILE, src)
}

/// Like [`parse_annotations`], recording `file` in every span.
pub fn parse_annotations_in(file: &str, src: &str) -> Result<SpecificationSet, AcslError> {
    let mut errors = Vec::new();
    let annotations = collect(file, src, &mut errors, true)?;
    match errors.into_iter().next() {
        Some(e) => Err(e),
        None => Ok(SpecificationSet::new(annotations)),
    }
}

/// Parses what can be parsed and reports every failing item separately.
/// Only an unterminated comment aborts the whole parse.
pub fn parse_annotations_lenient(src: &str) -> Result<(SpecificationSet, Vec<AcslError>), AcslError> {
    let mut errors = Vec::new();
    let annotations = collect(DEFAULT_FILE, src, &mut errors, false)?;
    Ok((SpecificationSet::new(annotations), errors))
}

/// Removes every ACSL comment, dropping lines that held nothing else.
pub fn strip_annotations(src: &str) -> Result<String, AcslError> {
    let o = outline(src)?;
    let mut out = String::with_capacity(src.len());
    let mut cursor = 0;
    for site in &o.sites {
        let line_start = src[..site.start].rfind('\n').map_or(0, |i| i + 1);
        let line_end = src[site.end..].find('\n').map_or(src.len(), |i| site.end + i);
        let alone = src[line_start..site.start].trim().is_empty() && src[site.end..line_end].trim().is_empty();
        let (from, to) = if alone {
            (line_start, (line_end + 1).min(src.len()))
        } else {
            (site.start, site.end)
        };
        let from = from.max(cursor);
        out.push_str(&src[cursor..from]);
        cursor = to;
    }
    out.push_str(&src[cursor..]);
    Ok(out)
}

fn collect(
    file: &str,
    src: &str,
    errors: &mut Vec<AcslError>,
    fail_fast: bool,
) -> Result<Vec<Annotation>, AcslError> {
    let o = outline(src)?;
    let lines = LineIndex::new(src);
    let mut out = Vec::new();
    for site in &o.sites {
        let cleaned = clean_site(src, site);
        let mut ctx = SiteParser {
            text: &cleaned,
            base: site.start,
            lines: &lines,
            file,
            placement: &site.placement,
            behavior: None,
            out: &mut out,
            errors,
            fail_fast,
        };
        ctx.items(0, cleaned.len(), false);
        if fail_fast && !ctx.errors.is_empty() {
            break;
        }
    }
    Ok(out)
}

/// The site's text with comment markers, `@` padding and nested `//`
/// comments blanked out. Byte offsets are preserved.
fn clean_site(src: &str, site: &AcslSite) -> String {
    let mut bytes = src.as_bytes()[site.start..site.end].to_vec();
    let len = bytes.len();
    if site.block {
        bytes[..3].fill(b' ');
        bytes[len - 2..].fill(b' ');
    }
    let mut i = 0;
    while i < len {
        match bytes[i] {
            b'"' | b'\'' => {
                i = skip_quoted(&bytes, i);
                continue;
            }
            b'/' if !site.block && bytes.get(i + 1) == Some(&b'/') && bytes.get(i + 2) == Some(&b'@') => {
                bytes[i..i + 3].fill(b' ');
                i += 3;
                continue;
            }
            b'/' if bytes.get(i + 1) == Some(&b'/') => {
                while i < len && bytes[i] != b'\n' {
                    bytes[i] = b' ';
                    i += 1;
                }
                continue;
            }
            b'@' => bytes[i] = b' ',
            _ => {}
        }
        i += 1;
    }
    // Only ASCII bytes were replaced, so this stays valid UTF-8.
    String::from_utf8(bytes).expect("ascii substitutions keep utf-8 valid")
}

struct SiteParser<'a> {
    text: &'a str,
    base: usize,
    lines: &'a LineIndex,
    file: &'a str,
    placement: &'a Placement,
    behavior: Option<String>,
    out: &'a mut Vec<Annotation>,
    errors: &'a mut Vec<AcslError>,
    fail_fast: bool,
}

impl SiteParser<'_> {
    fn line(&self, pos: usize) -> u32 {
        self.lines.line(self.base + pos)
    }

    fn fail(&mut self, err: AcslError, pos: usize) {
        let line = self.line(pos);
        self.errors.push(err.at_line(line));
    }

    fn malformed(&mut self, reason: &str, pos: usize) {
        self.fail(AcslError::MalformedAnnotation { reason: reason.into(), line: 0 }, pos);
    }

    /// Parses the items in `text[from..to]`.
    fn items(&mut self, from: usize, to: usize, in_axiomatic: bool) {
        let bytes = self.text.as_bytes();
        let mut pos = from;
        loop {
            if self.fail_fast && !self.errors.is_empty() {
                return;
            }
            pos = skip_ws(bytes, pos, to);
            if pos >= to {
                return;
            }
            let start = pos;
            let (w1, after1) = word(bytes, pos, to);
            if w1.is_empty() {
                self.malformed(&format!("unexpected `{}`", bytes[pos] as char), pos);
                return;
            }
            match w1 {
                "axiomatic" => {
                    let (name, after_name) = word(bytes, skip_ws(bytes, after1, to), to);
                    let open = skip_ws(bytes, after_name, to);
                    if in_axiomatic || name.is_empty() || bytes.get(open) != Some(&b'{') || open >= to {
                        self.malformed("expected `axiomatic Name {`", start);
                        return;
                    }
                    let Some(close) = matching_brace(bytes, open, to) else {
                        self.malformed("unterminated axiomatic block", start);
                        return;
                    };
                    self.items(open + 1, close, true);
                    pos = close + 1;
                    let next = skip_ws(bytes, pos, to);
                    if bytes.get(next) == Some(&b';') && next < to {
                        pos = next + 1;
                    }
                }
                "inductive" => {
                    self.fail(AcslError::Classification { keyword: "inductive".into(), line: 0 }, start);
                    let open = bytes[pos..to].iter().position(|&b| b == b'{').map(|i| pos + i);
                    match open.and_then(|o| matching_brace(bytes, o, to)) {
                        Some(close) => pos = close + 1,
                        None => return,
                    }
                }
                "behavior" => {
                    let (name, after_name) = word(bytes, skip_ws(bytes, after1, to), to);
                    let colon = skip_ws(bytes, after_name, to);
                    if name.is_empty() || colon >= to || bytes[colon] != b':' {
                        self.malformed("expected `behavior name:`", start);
                        return;
                    }
                    let mut end = colon + 1;
                    // `assumes` clauses belong to the behavior header.
                    loop {
                        let next = skip_ws(bytes, end, to);
                        let (w, _) = word(bytes, next, to);
                        if w != "assumes" {
                            break;
                        }
                        match terminator(bytes, next, to) {
                            Some(semi) => end = semi + 1,
                            None => {
                                self.malformed("clause has no terminating `;`", next);
                                return;
                            }
                        }
                    }
                    self.behavior = Some(name.to_string());
                    self.emit(ConstructKind::Behavior, start, end, in_axiomatic);
                    pos = end;
                }
                _ => {
                    let Some(semi) = terminator(bytes, start, to) else {
                        self.malformed("clause has no terminating `;`", start);
                        return;
                    };
                    let mut head_at = start;
                    if w1 == "for" {
                        // `for b1, b2: loop invariant ...`
                        match bytes[after1..semi].iter().position(|&b| b == b':') {
                            Some(c) => head_at = skip_ws(bytes, after1 + c + 1, semi),
                            None => {
                                self.malformed("expected `for behaviors:`", start);
                                pos = semi + 1;
                                continue;
                            }
                        }
                    }
                    let (h1, after_h1) = word(bytes, head_at, semi);
                    let (h2, _) = word(bytes, skip_ws(bytes, after_h1, semi), semi);
                    match classify_construct(&[h1, h2]) {
                        Ok(kind) => {
                            if kind == ConstructKind::Behavior {
                                // complete/disjoint behaviors close the named behaviors.
                                self.behavior = None;
                            }
                            if w1 == "for" && !kind.is_loop() {
                                self.malformed("`for` prefix only applies to loop clauses", start);
                            } else {
                                self.emit(kind, start, semi + 1, in_axiomatic);
                            }
                        }
                        Err(e) => self.fail(e, start),
                    }
                    pos = semi + 1;
                }
            }
        }
    }

    fn emit(&mut self, kind: ConstructKind, start: usize, end: usize, in_axiomatic: bool) {
        let anchor = match self.anchor_for(kind, in_axiomatic) {
            Ok(a) => a,
            Err(reason) => {
                self.malformed(reason, start);
                return;
            }
        };
        let text = normalize_text(&self.text[start..end]);
        let span = SourceSpan {
            file: self.file.to_string(),
            start_line: self.line(start),
            end_line: self.line(end.saturating_sub(1).max(start)),
        };
        self.out.push(Annotation { kind, text, span, anchor });
    }

    fn anchor_for(&self, kind: ConstructKind, in_axiomatic: bool) -> Result<Anchor, &'static str> {
        if kind.is_logical() {
            return match self.placement {
                Placement::TopLevel { .. } => Ok(Anchor::Global),
                _ => Err("global logic declaration inside a function or type"),
            };
        }
        if in_axiomatic {
            return Err("only logic declarations may appear in an axiomatic block");
        }
        if kind.is_loop() {
            return match self.placement {
                Placement::InFunction { function, next_loop: Some(ordinal) } => {
                    Ok(Anchor::Loop { function: function.clone(), ordinal: *ordinal })
                }
                Placement::InFunction { .. } => Err("loop annotation is not followed by a loop"),
                _ => Err("loop annotation outside a function body"),
            };
        }
        match self.placement {
            Placement::TopLevel { next_function: Some(function) } => Ok(Anchor::FunctionContract {
                function: function.clone(),
                behavior: self.behavior.clone(),
            }),
            Placement::TopLevel { next_function: None } => {
                Err("function contract is not followed by a function declaration")
            }
            Placement::InFunction { .. } => Err("statement contracts are not supported"),
            Placement::Nested => Err("contract inside a type or initializer"),
        }
    }
}

fn skip_ws(bytes: &[u8], mut pos: usize, to: usize) -> usize {
    while pos < to && bytes[pos].is_ascii_whitespace() {
        pos += 1;
    }
    pos
}

fn word(bytes: &[u8], pos: usize, to: usize) -> (&str, usize) {
    let mut end = pos;
    while end < to && (bytes[end].is_ascii_alphanumeric() || bytes[end] == b'_') {
        end += 1;
    }
    if end > pos && bytes[pos].is_ascii_digit() {
        return ("", pos);
    }
    (std::str::from_utf8(&bytes[pos..end]).unwrap_or(""), end)
}

fn matching_brace(bytes: &[u8], open: usize, to: usize) -> Option<usize> {
    let mut depth = 0usize;
    let mut i = open;
    while i < to {
        match bytes[i] {
            b'"' | b'\'' => {
                i = skip_quoted(bytes, i);
                continue;
            }
            b'{' => depth += 1,
            b'}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(i);
                }
            }
            _ => {}
        }
        i += 1;
    }
    None
}

/// Offset of the `;` ending the clause that starts at `from`.
///
/// Binders (`\forall`, `\exists`, `\lambda`, `\let`) written at the top
/// level of a clause each consume one `;` of their own.
fn terminator(bytes: &[u8], from: usize, to: usize) -> Option<usize> {
    let mut depth = 0i32;
    let mut pending_binders = 0u32;
    let mut i = from;
    while i < to {
        match bytes[i] {
            b'"' | b'\'' => {
                i = skip_quoted(bytes, i);
                continue;
            }
            b'(' | b'[' | b'{' => depth += 1,
            b')' | b']' | b'}' => depth -= 1,
            b'\\' if depth == 0 => {
                let (w, end) = word(bytes, i + 1, to);
                if matches!(w, "forall" | "exists" | "lambda" | "let") {
                    pending_binders += 1;
                }
                i = end.max(i + 1);
                continue;
            }
            b';' if depth == 0 => {
                if pending_binders == 0 {
                    return Some(i);
                }
                pending_binders -= 1;
            }
            _ => {}
        }
        i += 1;
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::acsl::{constr, Anchor, ConstructKind as K};

    fn kinds(spec: &SpecificationSet) -> Vec<K> {
        spec.iter().map(|a| a.kind).collect()
    }

    #[test]
    fn loop_annotation_before_while() {
        let src = "void f(int n) {\n  int i = 0;\n  /*@ loop invariant 0 <= i; loop assigns i; */\n  while (i < n) i++;\n}\n";
        let spec = parse_annotations(src).unwrap();
        assert_eq!(kinds(&spec), vec![K::LoopInvariant, K::LoopAssigns]);
        for a in &spec {
            assert_eq!(a.anchor, Anchor::loop_at("f", 1));
            assert_eq!(a.span.start_line, 3);
        }
        assert_eq!(spec.annotations()[0].text, "loop invariant 0 <= i;");
    }

    #[test]
    fn no_annotations_is_empty() {
        let spec = parse_annotations("/* plain */ int main(void) { return 0; }").unwrap();
        assert!(spec.is_empty());
    }

    #[test]
    fn contract_clauses_and_behaviors() {
        let src = r"/*@ requires \valid(p);
    assigns *p;
    behavior pos:
      assumes x > 0;
      ensures *p == x;
    behavior neg:
      assumes x <= 0;
      ensures *p == 0;
      assigns *p;
    complete behaviors;
    disjoint behaviors pos, neg;
*/
void clamp(int *p, int x);
";
        let spec = parse_annotations(src).unwrap();
        assert_eq!(
            kinds(&spec),
            vec![K::Requires, K::Assigns, K::Behavior, K::Ensures, K::Behavior, K::Ensures, K::Assigns, K::Behavior, K::Behavior]
        );
        let a = spec.annotations();
        assert_eq!(a[2].text, "behavior pos: assumes x > 0;");
        assert_eq!(
            a[3].anchor,
            Anchor::FunctionContract { function: "clamp".into(), behavior: Some("pos".into()) }
        );
        // identical text in the default behavior and in `neg` stays distinct
        assert_eq!(a[1].text, a[6].text);
        assert_ne!(a[1].anchor, a[6].anchor);
        assert_eq!(a[7].anchor, Anchor::contract("clamp"));
    }

    #[test]
    fn quantifier_and_let_semicolons_do_not_split() {
        let src = "/*@ requires \\forall integer i; 0 <= i < n ==> a[i] >= 0;\n    ensures \\let s = n + 1; \\result == s;\n*/\nint f(int *a, int n);\n";
        let spec = parse_annotations(src).unwrap();
        assert_eq!(spec.len(), 2);
        assert_eq!(spec.annotations()[0].text, "requires \\forall integer i; 0 <= i < n ==> a[i] >= 0;");
    }

    #[test]
    fn axiomatic_members_are_separate() {
        let src = "/*@ axiomatic DigitSum {\n  @ logic integer digit_sum(integer n);\n  @ axiom base: digit_sum(0) == 0;\n  @ axiom step: \\forall integer n; n > 0 ==> digit_sum(n) == n % 10 + digit_sum(n / 10);\n  @ }\n  @*/\nint f(int x) { return x; }\n";
        let spec = parse_annotations(src).unwrap();
        assert_eq!(kinds(&spec), vec![K::Logic, K::Axiom, K::Axiom]);
        assert!(spec.iter().all(|a| a.anchor == Anchor::Global));
        assert_eq!(spec.annotations()[1].span.start_line, 3);
        assert_eq!(spec.annotations()[2].span.start_line, 4);
    }

    #[test]
    fn line_annotations_merge_across_lines() {
        let src = "//@ requires x > 0 &&\n//@   x < 10;\nint f(int x) { return x; }\n";
        let spec = parse_annotations(src).unwrap();
        assert_eq!(spec.len(), 1);
        assert_eq!(spec.annotations()[0].text, "requires x > 0 && x < 10;");
        assert_eq!(spec.annotations()[0].span.end_line, 2);
    }

    #[test]
    fn ghost_is_a_classification_error() {
        let src = "int f(int x) {\n  //@ ghost int y = x;\n  return x;\n}\n";
        assert!(matches!(
            parse_annotations(src),
            Err(AcslError::Classification { keyword, line: 2 }) if keyword == "ghost"
        ));
    }

    #[test]
    fn missing_semicolon_is_malformed() {
        let src = "void f(int n) {\n  /*@ loop variant n */\n  while (n) n--;\n}\n";
        assert!(matches!(parse_annotations(src), Err(AcslError::MalformedAnnotation { line: 2, .. })));
    }

    #[test]
    fn unterminated_comment_is_malformed() {
        assert!(matches!(
            parse_annotations("/*@ requires x;\nint f(int x);"),
            Err(AcslError::MalformedAnnotation { .. })
        ));
    }

    #[test]
    fn loop_annotation_without_loop_is_malformed() {
        let src = "int f(int x) {\n  //@ loop invariant x > 0;\n  return x;\n}\n";
        assert!(matches!(parse_annotations(src), Err(AcslError::MalformedAnnotation { .. })));
    }

    #[test]
    fn contract_without_function_is_malformed() {
        assert!(matches!(
            parse_annotations("/*@ ensures \\true; */\nint x;"),
            Err(AcslError::MalformedAnnotation { .. })
        ));
    }

    #[test]
    fn lenient_parse_counts_every_item() {
        let src = "/*@ lemma a: \\true; */\nint f(int x) {\n  //@ assert x == x;\n  /*@ loop invariant x >= 0; loop pragma UNROLL 2; loop variant x; */\n  while (x > 0) x--;\n  return x;\n}\n";
        let (spec, errors) = parse_annotations_lenient(src).unwrap();
        assert_eq!(spec.len(), 3);
        assert_eq!(errors.len(), 2);
        assert_eq!(constr(&spec), [K::Lemma, K::LoopInvariant, K::LoopVariant].into_iter().collect());
    }

    #[test]
    fn loops_are_numbered_per_function() {
        let src = "void f(int n) {\n  for (int i = 0; i < n; i++) {}\n  do { n--; } while (n > 0);\n  //@ loop assigns n;\n  while (n < 3) n++;\n}\n";
        let spec = parse_annotations(src).unwrap();
        assert_eq!(spec.annotations()[0].anchor, Anchor::loop_at("f", 3));
    }

    #[test]
    fn behavior_specific_loop_clause() {
        let src = "void f(int n) {\n  /*@ for pos: loop invariant n >= 0; */\n  while (n) n--;\n}\n";
        let spec = parse_annotations(src).unwrap();
        assert_eq!(spec.annotations()[0].kind, K::LoopInvariant);
        assert_eq!(spec.annotations()[0].text, "for pos: loop invariant n >= 0;");
    }

    #[test]
    fn strip_recovers_bare_program() {
        let src = "/*@ requires x > 0; */\nint f(int x) {\n  //@ loop invariant x >= 0;\n  while (x) x--;\n  return x;\n}\n";
        let bare = strip_annotations(src).unwrap();
        assert_eq!(bare, "int f(int x) {\n  while (x) x--;\n  return x;\n}\n");
        assert!(parse_annotations(&bare).unwrap().is_empty());
    }
}
