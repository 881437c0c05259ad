use std::collections::BTreeMap;

use super::outline::{line_aligned, outline};
use super::{AcslError, Anchor, Annotation, ConstructKind, SpecificationSet};

/// Inserts `spec` into `bare` as ACSL comments.
///
/// Global declarations go before the first function declaration, contracts
/// before the definition of their function and loop annotations right before
/// their loop. Every annotation is written on a line of its own.
pub fn weave(bare: &str, spec: &SpecificationSet) -> Result<String, AcslError> {
    if spec.is_empty() {
        return Ok(bare.to_string());
    }
    let o = outline(bare)?;
    // offset -> blocks inserted there, in insertion order
    let mut inserts: BTreeMap<usize, Vec<String>> = BTreeMap::new();

    let globals: Vec<&Annotation> = spec.iter().filter(|a| a.anchor == Anchor::Global).collect();
    if !globals.is_empty() {
        let at = o.first_decl_start().unwrap_or(bare.len());
        inserts.entry(at).or_default().push(global_block(&globals));
    }

    let mut contracts: BTreeMap<String, Vec<&Annotation>> = BTreeMap::new();
    let mut loops: BTreeMap<(String, u32), Vec<&Annotation>> = BTreeMap::new();
    for a in spec {
        match &a.anchor {
            Anchor::Global => {}
            Anchor::FunctionContract { function, .. } => {
                contracts.entry(function.clone()).or_default().push(a)
            }
            Anchor::Loop { function, ordinal } => {
                loops.entry((function.clone(), *ordinal)).or_default().push(a)
            }
        }
    }

    for (function, clauses) in &contracts {
        let def = o.definition(function).ok_or_else(|| AcslError::AnchorNotFound {
            anchor: clauses[0].anchor.clone(),
        })?;
        inserts.entry(def.decl_start).or_default().push(contract_block(&clauses[..]));
    }

    for ((function, ordinal), clauses) in &loops {
        let lp = o
            .definition(function)
            .and_then(|f| f.loops.iter().find(|l| l.ordinal == *ordinal))
            .ok_or_else(|| AcslError::AnchorNotFound { anchor: clauses[0].anchor.clone() })?;
        let at = line_aligned(bare, lp.keyword_start);
        let line_start = bare[..lp.keyword_start].rfind('\n').map_or(0, |i| i + 1);
        let indent: String = bare[line_start..].chars().take_while(|c| *c == ' ' || *c == '\t').collect();
        let mut block = loop_block(&clauses[..], &indent);
        if at != line_start {
            block.insert(0, '\n');
        }
        inserts.entry(at).or_default().push(block);
    }

    let mut out = String::with_capacity(bare.len() + 64 * spec.len());
    let mut cursor = 0;
    for (at, blocks) in inserts {
        out.push_str(&bare[cursor..at]);
        if at == bare.len() && !out.is_empty() && !out.ends_with('\n') {
            out.push('\n');
        }
        for b in blocks {
            out.push_str(&b);
        }
        cursor = at;
    }
    out.push_str(&bare[cursor..]);
    Ok(out)
}

fn global_block(globals: &[&Annotation]) -> String {
    let mut out = String::from("/*@\n");
    let mut axiomatic_open = false;
    let mut axiomatics = 0;
    for a in globals {
        let wants = a.needs_axiomatic();
        if wants && !axiomatic_open {
            axiomatics += 1;
            out.push_str(&format!("  axiomatic Generated{axiomatics} {{\n"));
            axiomatic_open = true;
        } else if !wants && axiomatic_open {
            out.push_str("  }\n");
            axiomatic_open = false;
        }
        let indent = if axiomatic_open { "    " } else { "  " };
        out.push_str(indent);
        out.push_str(&a.text);
        out.push('\n');
    }
    if axiomatic_open {
        out.push_str("  }\n");
    }
    out.push_str("*/\n");
    out
}

/// Requires clauses first, then the remaining default-behavior clauses,
/// then named behaviors, then completeness clauses.
fn contract_block(clauses: &[&Annotation]) -> String {
    let behavior_of = |a: &Annotation| match &a.anchor {
        Anchor::FunctionContract { behavior, .. } => behavior.clone(),
        _ => None,
    };
    let mut lines: Vec<String> = Vec::new();

    let default: Vec<&&Annotation> =
        clauses.iter().filter(|a| behavior_of(a).is_none() && a.kind != ConstructKind::Behavior).collect();
    push_requires_first(&mut lines, &default, "");

    let mut named: Vec<String> = Vec::new();
    for a in clauses {
        if let Some(b) = behavior_of(a) {
            if !named.contains(&b) {
                named.push(b);
            }
        }
    }
    for b in &named {
        let members: Vec<&&Annotation> =
            clauses.iter().filter(|a| behavior_of(a).as_deref() == Some(b.as_str())).collect();
        match members.iter().find(|a| a.kind == ConstructKind::Behavior) {
            Some(header) => lines.push(header.text.clone()),
            None => lines.push(format!("behavior {b}:")),
        }
        let body: Vec<&&Annotation> =
            members.into_iter().filter(|a| a.kind != ConstructKind::Behavior).collect();
        push_requires_first(&mut lines, &body, "  ");
    }

    lines.extend(
        clauses
            .iter()
            .filter(|a| behavior_of(a).is_none() && a.kind == ConstructKind::Behavior)
            .map(|a| a.text.clone()),
    );

    let mut out = String::new();
    for (i, line) in lines.iter().enumerate() {
        out.push_str(if i == 0 { "/*@ " } else { "    " });
        out.push_str(line);
        out.push('\n');
    }
    out.push_str("*/\n");
    out
}

fn push_requires_first(lines: &mut Vec<String>, clauses: &[&&Annotation], indent: &str) {
    let (requires, rest): (Vec<&&Annotation>, Vec<&&Annotation>) =
        clauses.iter().copied().partition(|a| a.kind == ConstructKind::Requires);
    lines.extend(requires.iter().chain(rest.iter()).map(|a| format!("{indent}{}", a.text)));
}

/// Plain loop clauses, then behavior-specific ones, then variants.
fn loop_block(clauses: &[&Annotation], indent: &str) -> String {
    let rank = |a: &Annotation| {
        if a.kind == ConstructKind::LoopVariant {
            2
        } else if a.text.starts_with("for ") {
            1
        } else {
            0
        }
    };
    let mut ordered: Vec<&&Annotation> = clauses.iter().collect();
    ordered.sort_by_key(|a| rank(a));
    let mut out = String::new();
    for (i, a) in ordered.iter().enumerate() {
        out.push_str(indent);
        out.push_str(if i == 0 { "/*@ " } else { "    " });
        out.push_str(&a.text);
        out.push('\n');
    }
    out.push_str(indent);
    out.push_str("*/\n");
    out
}
