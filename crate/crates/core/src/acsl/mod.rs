//! ACSL annotation model: classification, parsing out of C source and
//! weaving back into bare C source.
//!
//! Clause bodies are kept as opaque text. Only clause heads are interpreted,
//! which is enough to classify every annotation and to put it back where it
//! belongs.

mod lexer;
mod outline;
mod parse;
mod weave;

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use parse::{parse_annotations, parse_annotations_in, parse_annotations_lenient, strip_annotations};
pub use weave::weave;

/// The ACSL syntactic constructs under study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ConstructKind {
    Requires,
    Ensures,
    Assigns,
    LoopInvariant,
    LoopVariant,
    LoopAssigns,
    Behavior,
    Predicate,
    Logic,
    Lemma,
    Axiom,
}

impl ConstructKind {
    pub const ALL: [ConstructKind; 11] = [
        ConstructKind::Requires,
        ConstructKind::Ensures,
        ConstructKind::Assigns,
        ConstructKind::LoopInvariant,
        ConstructKind::LoopVariant,
        ConstructKind::LoopAssigns,
        ConstructKind::Behavior,
        ConstructKind::Predicate,
        ConstructKind::Logic,
        ConstructKind::Lemma,
        ConstructKind::Axiom,
    ];

    pub const BASIC: [ConstructKind; 7] = [
        ConstructKind::Requires,
        ConstructKind::Ensures,
        ConstructKind::Assigns,
        ConstructKind::LoopInvariant,
        ConstructKind::LoopVariant,
        ConstructKind::LoopAssigns,
        ConstructKind::Behavior,
    ];

    pub const LOGICAL: [ConstructKind; 4] = [
        ConstructKind::Predicate,
        ConstructKind::Logic,
        ConstructKind::Lemma,
        ConstructKind::Axiom,
    ];

    /// The ACSL keyword heading a clause of this kind.
    pub fn keyword(self) -> &'static str {
        match self {
            ConstructKind::Requires => "requires",
            ConstructKind::Ensures => "ensures",
            ConstructKind::Assigns => "assigns",
            ConstructKind::LoopInvariant => "loop invariant",
            ConstructKind::LoopVariant => "loop variant",
            ConstructKind::LoopAssigns => "loop assigns",
            ConstructKind::Behavior => "behavior",
            ConstructKind::Predicate => "predicate",
            ConstructKind::Logic => "logic",
            ConstructKind::Lemma => "lemma",
            ConstructKind::Axiom => "axiom",
        }
    }

    pub fn is_logical(self) -> bool {
        Self::LOGICAL.contains(&self)
    }

    pub fn is_loop(self) -> bool {
        matches!(
            self,
            ConstructKind::LoopInvariant | ConstructKind::LoopVariant | ConstructKind::LoopAssigns
        )
    }

    /// Whether a deductive verifier generates proof obligations for clauses of
    /// this kind. Axioms are admitted, logic declarations and behavior headers
    /// only define things.
    pub fn generates_goals(self) -> bool {
        !matches!(
            self,
            ConstructKind::Behavior
                | ConstructKind::Predicate
                | ConstructKind::Logic
                | ConstructKind::Axiom
        )
    }

    /// Bit position used by [`KindMask`].
    pub fn bit(self) -> u16 {
        1 << (self as u16)
    }
}

impl fmt::Display for ConstructKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.keyword())
    }
}

/// Compact set of construct kinds, one bit per kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct KindMask(pub u16);

impl KindMask {
    pub const FULL: KindMask = KindMask((1 << 11) - 1);

    pub fn from_kinds<I: IntoIterator<Item = ConstructKind>>(kinds: I) -> Self {
        KindMask(kinds.into_iter().fold(0, |m, k| m | k.bit()))
    }

    pub fn contains(self, kind: ConstructKind) -> bool {
        self.0 & kind.bit() != 0
    }

    pub fn kinds(self) -> BTreeSet<ConstructKind> {
        ConstructKind::ALL.iter().copied().filter(|k| self.contains(*k)).collect()
    }
}

/// Classify the head tokens of a clause.
///
/// `complete behaviors` and `disjoint behaviors` are behavior syntax and
/// classify as [`ConstructKind::Behavior`]. `axiomatic` is a container, not a
/// construct, so it does not classify.
pub fn classify_construct<S: AsRef<str>>(tokens: &[S]) -> Result<ConstructKind, AcslError> {
    let first = tokens.first().map(|t| t.as_ref()).unwrap_or("");
    let second = tokens.get(1).map(|t| t.as_ref()).unwrap_or("");
    let kind = match first {
        "requires" => ConstructKind::Requires,
        "ensures" => ConstructKind::Ensures,
        "assigns" => ConstructKind::Assigns,
        "behavior" => ConstructKind::Behavior,
        "complete" | "disjoint" if second == "behaviors" || second == "behavior" => {
            ConstructKind::Behavior
        }
        "predicate" => ConstructKind::Predicate,
        "logic" => ConstructKind::Logic,
        "lemma" => ConstructKind::Lemma,
        "axiom" => ConstructKind::Axiom,
        "loop" => match second {
            "invariant" => ConstructKind::LoopInvariant,
            "variant" => ConstructKind::LoopVariant,
            "assigns" => ConstructKind::LoopAssigns,
            _ => {
                return Err(AcslError::Classification {
                    keyword: format!("loop {second}").trim_end().to_string(),
                    line: 0,
                })
            }
        },
        _ => {
            let keyword = if first.is_empty() { "<empty>".to_string() } else { first.to_string() };
            return Err(AcslError::Classification { keyword, line: 0 });
        }
    };
    Ok(kind)
}

/// A region of a source file, 1-based inclusive lines.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SourceSpan {
    pub file: String,
    pub start_line: u32,
    pub end_line: u32,
}

impl SourceSpan {
    pub fn contains_line(&self, line: u32) -> bool {
        self.start_line <= line && line <= self.end_line
    }
}

/// Where an annotation is attached in the program.
///
/// Contract clauses nested in a named behavior carry the behavior name so
/// that identical clauses in different behaviors stay distinct.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "at", rename_all = "snake_case")]
pub enum Anchor {
    Global,
    FunctionContract {
        function: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        behavior: Option<String>,
    },
    Loop {
        function: String,
        ordinal: u32,
    },
}

impl Anchor {
    pub fn contract(function: impl Into<String>) -> Self {
        Anchor::FunctionContract { function: function.into(), behavior: None }
    }

    pub fn loop_at(function: impl Into<String>, ordinal: u32) -> Self {
        Anchor::Loop { function: function.into(), ordinal }
    }

    pub fn function(&self) -> Option<&str> {
        match self {
            Anchor::Global => None,
            Anchor::FunctionContract { function, .. } | Anchor::Loop { function, .. } => {
                Some(function)
            }
        }
    }
}

impl fmt::Display for Anchor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Anchor::Global => f.write_str("global"),
            Anchor::FunctionContract { function, behavior: None } => write!(f, "contract({function})"),
            Anchor::FunctionContract { function, behavior: Some(b) } => {
                write!(f, "contract({function}, behavior {b})")
            }
            Anchor::Loop { function, ordinal } => write!(f, "loop({function}, {ordinal})"),
        }
    }
}

/// One ACSL clause or one global logic declaration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotation {
    pub kind: ConstructKind,
    /// Clause text with whitespace collapsed, including its terminator.
    pub text: String,
    pub span: SourceSpan,
    pub anchor: Anchor,
}

/// Identity of an annotation: everything except its span.
pub type AnnotationKey = (ConstructKind, Anchor, String);

impl Annotation {
    pub fn new(kind: ConstructKind, text: impl Into<String>, anchor: Anchor) -> Self {
        Annotation {
            kind,
            text: normalize_text(&text.into()),
            span: SourceSpan { file: String::new(), start_line: 1, end_line: 1 },
            anchor,
        }
    }

    pub fn key(&self) -> AnnotationKey {
        (self.kind, self.anchor.clone(), self.text.clone())
    }

    /// Name introduced by a global declaration or a behavior header.
    pub fn declared_name(&self) -> Option<&str> {
        match self.kind {
            ConstructKind::Predicate | ConstructKind::Logic => {
                let head = self.text.split(['(', '{', '=', ';']).next()?;
                head.split_whitespace().last().filter(|n| is_ident(n))
            }
            ConstructKind::Lemma | ConstructKind::Axiom => {
                let rest = self.text.split_whitespace().nth(1)?;
                let name = rest.split(['{', ':']).next()?;
                Some(name).filter(|n| is_ident(n))
            }
            ConstructKind::Behavior => {
                let mut words = self.text.split_whitespace();
                if words.next()? != "behavior" {
                    return None;
                }
                let name = words.next()?.trim_end_matches(':');
                Some(name).filter(|n| is_ident(n))
            }
            _ => None,
        }
    }

    /// Whether the text mentions `name` as a whole identifier.
    pub fn mentions(&self, name: &str) -> bool {
        mentions_ident(&self.text, name)
    }

    /// Whether this global declaration has to live inside an `axiomatic` block:
    /// axioms and logic functions or predicates declared without a body.
    pub fn needs_axiomatic(&self) -> bool {
        match self.kind {
            ConstructKind::Axiom => true,
            ConstructKind::Predicate | ConstructKind::Logic => {
                !self.text.contains('=') && !self.text.contains('{')
                    || self.text.contains(" reads ")
            }
            _ => false,
        }
    }
}

pub(crate) fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

pub(crate) fn mentions_ident(text: &str, name: &str) -> bool {
    text.match_indices(name).any(|(at, _)| {
        let before = text[..at].chars().next_back();
        let after = text[at + name.len()..].chars().next();
        let boundary = |c: Option<char>| !matches!(c, Some(c) if c.is_ascii_alphanumeric() || c == '_');
        boundary(before) && boundary(after)
    })
}

pub(crate) fn normalize_text(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// An ordered, duplicate-free collection of annotations.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<Annotation>", into = "Vec<Annotation>")]
pub struct SpecificationSet {
    annotations: Vec<Annotation>,
}

impl From<Vec<Annotation>> for SpecificationSet {
    fn from(annotations: Vec<Annotation>) -> Self {
        SpecificationSet::new(annotations)
    }
}

impl From<SpecificationSet> for Vec<Annotation> {
    fn from(set: SpecificationSet) -> Self {
        set.annotations
    }
}

impl FromIterator<Annotation> for SpecificationSet {
    fn from_iter<I: IntoIterator<Item = Annotation>>(iter: I) -> Self {
        SpecificationSet::new(iter.into_iter().collect())
    }
}

impl SpecificationSet {
    /// Builds a set, keeping the first of any annotations sharing
    /// `(kind, text, anchor)`.
    pub fn new(annotations: Vec<Annotation>) -> Self {
        let mut seen = BTreeSet::new();
        let annotations =
            annotations.into_iter().filter(|a| seen.insert(a.key())).collect();
        SpecificationSet { annotations }
    }

    pub fn empty() -> Self {
        SpecificationSet::default()
    }

    pub fn annotations(&self) -> &[Annotation] {
        &self.annotations
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Annotation> {
        self.annotations.iter()
    }

    pub fn len(&self) -> usize {
        self.annotations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.annotations.is_empty()
    }

    pub fn get(&self, index: usize) -> Option<&Annotation> {
        self.annotations.get(index)
    }

    pub fn position(&self, key: &AnnotationKey) -> Option<usize> {
        self.annotations.iter().position(|a| &a.key() == key)
    }

    /// The set without the annotations at `indices`.
    pub fn without(&self, indices: &BTreeSet<usize>) -> SpecificationSet {
        SpecificationSet {
            annotations: self
                .annotations
                .iter()
                .enumerate()
                .filter(|(i, _)| !indices.contains(i))
                .map(|(_, a)| a.clone())
                .collect(),
        }
    }

    pub fn keys(&self) -> BTreeSet<AnnotationKey> {
        self.annotations.iter().map(Annotation::key).collect()
    }

    /// Equality that ignores spans and ordering.
    pub fn same_annotations(&self, other: &SpecificationSet) -> bool {
        self.keys() == other.keys()
    }
}

impl<'a> IntoIterator for &'a SpecificationSet {
    type Item = &'a Annotation;
    type IntoIter = std::slice::Iter<'a, Annotation>;

    fn into_iter(self) -> Self::IntoIter {
        self.annotations.iter()
    }
}

/// Names of the functions defined (with a body) in `src`, in textual order.
pub fn defined_functions(src: &str) -> Result<Vec<String>, AcslError> {
    Ok(outline::outline(src)?.functions.into_iter().filter(|f| f.has_body).map(|f| f.name).collect())
}

/// The set of construct kinds used in `spec`.
pub fn constr(spec: &SpecificationSet) -> BTreeSet<ConstructKind> {
    spec.iter().map(|a| a.kind).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AcslError {
    #[error("line {line}: `{keyword}` is not one of the supported ACSL constructs")]
    Classification { keyword: String, line: u32 },
    #[error("line {line}: malformed annotation: {reason}")]
    MalformedAnnotation { reason: String, line: u32 },
    #[error("cannot place annotation: {anchor} not found in source")]
    AnchorNotFound { anchor: Anchor },
}

impl AcslError {
    pub(crate) fn at_line(self, at: u32) -> Self {
        match self {
            AcslError::Classification { keyword, .. } => AcslError::Classification { keyword, line: at },
            AcslError::MalformedAnnotation { reason, .. } => {
                AcslError::MalformedAnnotation { reason, line: at }
            }
            other => other,
        }
    }
}
