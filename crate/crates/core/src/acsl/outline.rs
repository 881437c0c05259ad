//! Coarse structure of a C translation unit: top-level function
//! declarations, function bodies, loop statements and where each ACSL
//! comment sits relative to them.

use std::collections::HashMap;

use super::lexer::{lex, Tok, TokKind};
use super::AcslError;

#[derive(Debug, Clone)]
pub(crate) struct FunctionInfo {
    pub name: String,
    /// Byte offset where the declaration (return type, qualifiers) starts.
    pub decl_start: usize,
    pub has_body: bool,
    pub loops: Vec<LoopInfo>,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct LoopInfo {
    pub ordinal: u32,
    pub keyword_start: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum Placement {
    /// Outside every brace; `next_function` is the function declared
    /// immediately after the comment, if any.
    TopLevel { next_function: Option<String> },
    /// Inside a function body; `next_loop` is the ordinal of the loop that
    /// immediately follows, if any.
    InFunction { function: String, next_loop: Option<u32> },
    /// Inside some other braces (struct bodies, initializers).
    Nested,
}

/// A run of ACSL comments that belong together: one block comment, or
/// several adjacent `//@` line comments.
#[derive(Debug, Clone)]
pub(crate) struct AcslSite {
    pub start: usize,
    pub end: usize,
    pub block: bool,
    pub placement: Placement,
}

#[derive(Debug, Default)]
pub(crate) struct Outline {
    /// Declarations and definitions in textual order.
    pub functions: Vec<FunctionInfo>,
    pub sites: Vec<AcslSite>,
}

impl Outline {
    pub fn definition(&self, name: &str) -> Option<&FunctionInfo> {
        self.functions.iter().find(|f| f.has_body && f.name == name)
    }

    pub fn first_decl_start(&self) -> Option<usize> {
        self.functions.iter().map(|f| f.decl_start).min()
    }
}

const NOT_A_DECLARATOR: &[&str] = &[
    "if", "while", "for", "switch", "return", "sizeof", "__attribute__", "__declspec", "__asm__",
    "asm", "int", "char", "void", "long", "short", "unsigned", "signed", "float", "double",
    "struct", "union", "enum", "const", "volatile", "static", "extern", "inline", "_Bool",
];

pub(crate) fn outline(src: &str) -> Result<Outline, AcslError> {
    let toks = lex(src)?;
    let text = |t: &Tok| &src[t.start..t.end];
    let significant = |t: &Tok| !t.is_trivia() && !matches!(t.kind, TokKind::Acsl { .. });

    let mut functions = Vec::new();
    // token index of a function's first declaration token -> function index
    let mut decl_at: HashMap<usize, usize> = HashMap::new();
    // token index of a loop keyword -> ordinal
    let mut loop_at: HashMap<usize, u32> = HashMap::new();
    // per token: (brace depth, enclosing function index)
    let mut context: Vec<(u32, Option<usize>)> = Vec::with_capacity(toks.len());

    let mut depth: u32 = 0;
    let mut decl_first: Option<usize> = None;
    let mut current: Option<usize> = None;
    let mut loop_count: u32 = 0;
    let mut do_stack: Vec<u32> = Vec::new();
    let mut prev_sig: Option<usize> = None;

    for (idx, tok) in toks.iter().enumerate() {
        context.push((depth, current));
        if !significant(tok) {
            continue;
        }
        match tok.kind {
            TokKind::Punct(b'{') => {
                if depth == 0 {
                    let after_paren = prev_sig.is_some_and(|p| toks[p].is_punct(b')'));
                    let declarator = decl_first.and_then(|from| declarator_name(src, &toks, from, idx));
                    if let (true, Some(name_idx), Some(first)) = (after_paren, declarator, decl_first) {
                        decl_at.insert(first, functions.len());
                        functions.push(FunctionInfo {
                            name: text(&toks[name_idx]).to_string(),
                            decl_start: line_aligned(src, toks[first].start),
                            has_body: true,
                            loops: Vec::new(),
                        });
                        current = Some(functions.len() - 1);
                        loop_count = 0;
                        do_stack.clear();
                    }
                }
                depth += 1;
            }
            TokKind::Punct(b'}') => {
                depth = depth.saturating_sub(1);
                if depth == 0 {
                    current = None;
                    decl_first = None;
                }
            }
            TokKind::Punct(b';') if depth == 0 => {
                if let Some(first) = decl_first {
                    if let Some(name_idx) = declarator_name(src, &toks, first, idx) {
                        decl_at.insert(first, functions.len());
                        functions.push(FunctionInfo {
                            name: text(&toks[name_idx]).to_string(),
                            decl_start: line_aligned(src, toks[first].start),
                            has_body: false,
                            loops: Vec::new(),
                        });
                    }
                }
                decl_first = None;
            }
            TokKind::Ident if current.is_some() => {
                let counted = match text(tok) {
                    "for" => true,
                    "do" => {
                        do_stack.push(depth);
                        true
                    }
                    "while" => {
                        if do_stack.last() == Some(&depth) {
                            do_stack.pop();
                            false
                        } else {
                            true
                        }
                    }
                    _ => false,
                };
                if counted {
                    loop_count += 1;
                    loop_at.insert(idx, loop_count);
                    let f = current.expect("checked above");
                    functions[f].loops.push(LoopInfo { ordinal: loop_count, keyword_start: tok.start });
                }
            }
            _ => {}
        }
        if depth == 0 && decl_first.is_none() && !tok.is_punct(b'}') && !tok.is_punct(b';') {
            decl_first = Some(idx);
        }
        prev_sig = Some(idx);
    }

    let mut sites = Vec::new();
    let mut idx = 0;
    while idx < toks.len() {
        let tok = toks[idx];
        let TokKind::Acsl { block } = tok.kind else {
            idx += 1;
            continue;
        };
        // Adjacent `//@` lines form one site.
        let mut last = idx;
        if !block {
            while let Some(next) = toks.get(last + 1) {
                let gap = &src[toks[last].end..next.start];
                if next.kind == (TokKind::Acsl { block: false }) && gap.chars().all(char::is_whitespace) {
                    last += 1;
                } else {
                    break;
                }
            }
        }
        let next_sig = (last + 1..toks.len()).find(|&j| significant(&toks[j]));
        let (site_depth, site_fn) = context[idx];
        let placement = match site_fn {
            Some(f) => Placement::InFunction {
                function: functions[f].name.clone(),
                next_loop: next_sig.and_then(|j| loop_at.get(&j).copied()),
            },
            None if site_depth == 0 => Placement::TopLevel {
                next_function: next_sig
                    .and_then(|j| decl_at.get(&j))
                    .map(|&f| functions[f].name.clone()),
            },
            None => Placement::Nested,
        };
        sites.push(AcslSite { start: tok.start, end: toks[last].end, block, placement });
        idx = last + 1;
    }

    Ok(Outline { functions, sites })
}

/// Name of the function declared by tokens `from..to`, if they declare one.
fn declarator_name(src: &str, toks: &[Tok], from: usize, to: usize) -> Option<usize> {
    let mut parens = 0i32;
    let mut prev: Option<usize> = None;
    for j in from..to {
        let t = &toks[j];
        if t.is_trivia() || matches!(t.kind, TokKind::Acsl { .. }) {
            continue;
        }
        match t.kind {
            TokKind::Punct(b'(') => {
                if parens == 0 {
                    if let Some(p) = prev {
                        let name = &src[toks[p].start..toks[p].end];
                        if toks[p].kind == TokKind::Ident && !NOT_A_DECLARATOR.contains(&name) {
                            return Some(p);
                        }
                    }
                }
                parens += 1;
            }
            TokKind::Punct(b')') => parens -= 1,
            TokKind::Punct(b'=') if parens == 0 => return None,
            _ => {}
        }
        prev = Some(j);
    }
    None
}

/// Moves `offset` back to the start of its line when only whitespace
/// precedes it there.
pub(crate) fn line_aligned(src: &str, offset: usize) -> usize {
    let line_start = src[..offset].rfind('\n').map_or(0, |i| i + 1);
    if src[line_start..offset].chars().all(|c| c == ' ' || c == '\t') {
        line_start
    } else {
        offset
    }
}
