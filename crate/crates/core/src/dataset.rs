//! Program corpus loading.
//!
//! A corpus is a directory of `<category>/<program-id>.c` files. ACSL in the
//! files is stripped on load. A sidecar `<program-id>.target` file may name
//! the function under verification; otherwise the last function defined in
//! the file is used.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use walkdir::WalkDir;

use crate::acsl::{strip_annotations, AcslError};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("no .c files under {0}")]
    EmptyCorpus(PathBuf),
    #[error("program id `{id}` appears twice: {first} and {second}")]
    DuplicateId { id: String, first: PathBuf, second: PathBuf },
    #[error("{path}: target function `{function}` is not defined in the file")]
    MissingTargetFunction { path: PathBuf, function: String },
    #[error("{path}: {source}")]
    Acsl { path: PathBuf, source: AcslError },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("walking {path}: {source}")]
    Walk { path: PathBuf, source: walkdir::Error },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Program {
    pub id: String,
    /// C source with every ACSL annotation removed.
    pub source: String,
    pub target_function: String,
    pub category: String,
}

/// Loads every `.c` file under `root`, ordered by program id.
pub fn load_dataset(root: &Path) -> Result<Vec<Program>, DatasetError> {
    let mut found: BTreeMap<String, (PathBuf, Program)> = BTreeMap::new();
    for entry in WalkDir::new(root).sort_by_file_name() {
        let entry = entry.map_err(|source| DatasetError::Walk { path: root.to_path_buf(), source })?;
        let path = entry.path();
        if !entry.file_type().is_file() || path.extension().and_then(|e| e.to_str()) != Some("c") {
            continue;
        }
        let program = load_program(root, path)?;
        if let Some((first, _)) = found.get(&program.id) {
            return Err(DatasetError::DuplicateId {
                id: program.id.clone(),
                first: first.clone(),
                second: path.to_path_buf(),
            });
        }
        found.insert(program.id.clone(), (path.to_path_buf(), program));
    }
    if found.is_empty() {
        return Err(DatasetError::EmptyCorpus(root.to_path_buf()));
    }
    Ok(found.into_values().map(|(_, p)| p).collect())
}

fn load_program(root: &Path, path: &Path) -> Result<Program, DatasetError> {
    let io = |source| DatasetError::Io { path: path.to_path_buf(), source };
    let text = std::fs::read_to_string(path).map_err(io)?;
    let source = strip_annotations(&text).map_err(|source| DatasetError::Acsl { path: path.to_path_buf(), source })?;
    let id = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
    let category = path
        .strip_prefix(root)
        .ok()
        .and_then(|rel| {
            let mut parts = rel.components();
            let first = parts.next()?;
            parts.next().map(|_| first.as_os_str().to_string_lossy().into_owned())
        })
        .unwrap_or_else(|| "uncategorized".to_string());

    let defined = crate::acsl::defined_functions(&source).map_err(|source| DatasetError::Acsl {
        path: path.to_path_buf(),
        source,
    })?;
    let sidecar = path.with_extension("target");
    let target_function = if sidecar.exists() {
        let name = std::fs::read_to_string(&sidecar).map_err(io)?.trim().to_string();
        if !defined.contains(&name) {
            return Err(DatasetError::MissingTargetFunction { path: path.to_path_buf(), function: name });
        }
        name
    } else {
        defined.last().cloned().ok_or_else(|| DatasetError::MissingTargetFunction {
            path: path.to_path_buf(),
            function: "<any>".to_string(),
        })?
    };
    Ok(Program { id, source, target_function, category })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(root: &Path, rel: &str, text: &str) {
        let path = root.join(rel);
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(path, text).unwrap();
    }

    #[test]
    fn loads_categories_and_targets() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "loops/sum.c", "/*@ requires n >= 0; */\nint sum(int n) { return n; }\n");
        write(dir.path(), "arrays/max.c", "int helper(int x) { return x; }\nint max(int *a) { return a[0]; }\n");
        write(dir.path(), "arrays/max.target", "helper\n");
        write(dir.path(), "top.c", "void f(void) {}\n");
        let programs = load_dataset(dir.path()).unwrap();
        let ids: Vec<_> = programs.iter().map(|p| p.id.as_str()).collect();
        assert_eq!(ids, ["max", "sum", "top"]);
        assert_eq!(programs[0].category, "arrays");
        assert_eq!(programs[0].target_function, "helper");
        assert_eq!(programs[1].target_function, "sum");
        assert!(!programs[1].source.contains("requires"));
        assert_eq!(programs[2].category, "uncategorized");
    }

    #[test]
    fn empty_corpus() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(load_dataset(dir.path()), Err(DatasetError::EmptyCorpus(_))));
    }

    #[test]
    fn duplicate_ids() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "a/x.c", "void f(void) {}\n");
        write(dir.path(), "b/x.c", "void g(void) {}\n");
        assert!(matches!(load_dataset(dir.path()), Err(DatasetError::DuplicateId { .. })));
    }

    #[test]
    fn missing_target() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "a/x.c", "void f(void) {}\n");
        write(dir.path(), "a/x.target", "g");
        assert!(matches!(load_dataset(dir.path()), Err(DatasetError::MissingTargetFunction { .. })));
    }
}
