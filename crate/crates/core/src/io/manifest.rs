//! Problem manifests: `key=value` lines naming the files for `A`, `C` and
//! `b`. Relative paths are resolved against the manifest's directory.

use std::path::{Path, PathBuf};

use super::{matrix_market, parse_error, read_vector};
use crate::error::Result;
use crate::problem::CrqProblem;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Manifest {
    pub a: PathBuf,
    pub c: PathBuf,
    pub b: PathBuf,
}

impl Manifest {
    pub fn parse(text: &str, base: &Path, source_name: &str) -> Result<Self> {
        let (mut a, mut c, mut b) = (None, None, None);
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| parse_error(source_name, lineno + 1, format!("expected key=value, got `{line}`")))?;
            let path = base.join(value.trim());
            match key.trim() {
                "A" | "a" => a = Some(path),
                "C" | "c" => c = Some(path),
                "b" | "B" => b = Some(path),
                other => return Err(parse_error(source_name, lineno + 1, format!("unknown key `{other}`"))),
            }
        }
        let missing = |k: &str| parse_error(source_name, 0, format!("missing key `{k}`"));
        Ok(Self {
            a: a.ok_or_else(|| missing("A"))?,
            c: c.ok_or_else(|| missing("C"))?,
            b: b.ok_or_else(|| missing("b"))?,
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base, &path.display().to_string())
    }

    /// Writes the manifest with the given file names.
    pub fn render(a: &str, c: &str, b: &str) -> String {
        format!("A={a}\nC={c}\nb={b}\n")
    }

    pub fn load(&self) -> Result<CrqProblem> {
        let a = matrix_market::read_file(&self.a)?.to_operator()?;
        let c = matrix_market::read_file(&self.c)?.to_dense();
        let b_text = std::fs::read_to_string(&self.b)?;
        let b = read_vector(&b_text, &self.b.display().to_string())?;
        CrqProblem::new(a, c, b)
    }
}

/// Reads a manifest and the problem it names.
pub fn load_problem(path: &Path) -> Result<CrqProblem> {
    Manifest::read(path)?.load()
}
