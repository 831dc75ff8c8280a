//! Diagnostics: codes, severities, notes and rendering.

use crate::loc::SourceLoc;
use std::fmt;

/// Diagnostic codes.
///
/// E001..E005 are the analysis error rules; E000 covers ill-formed
/// annotations and other semantic problems found before the analysis runs;
/// E999 guards against internal inconsistencies. W101 is the optional
/// possible-null-dereference warning.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum Code {
    /// Ill-formed annotation or semantic error.
    E000,
    /// Dereference of a possibly invalid Pointer.
    E001,
    /// Dereference of a moved-from (or otherwise invalidated) Owner.
    E002,
    /// Raw pointer arithmetic.
    E003,
    /// Bad argument: invalid Pointer passed, or precondition violated.
    E004,
    /// Bad return: invalid Pointer returned, or postcondition violated.
    E005,
    /// Possible dereference of null (warning, off by default).
    W101,
    /// Internal analyzer error.
    E999,
}

impl Code {
    pub fn as_str(&self) -> &'static str {
        match self {
            Code::E000 => "E000",
            Code::E001 => "E001",
            Code::E002 => "E002",
            Code::E003 => "E003",
            Code::E004 => "E004",
            Code::E005 => "E005",
            Code::W101 => "W101",
            Code::E999 => "E999",
        }
    }

    pub fn severity(&self) -> Severity {
        match self {
            Code::W101 => Severity::Warning,
            _ => Severity::Error,
        }
    }

    pub fn parse(s: &str) -> Option<Code> {
        Some(match s {
            "E000" => Code::E000,
            "E001" => Code::E001,
            "E002" => Code::E002,
            "E003" => Code::E003,
            "E004" => Code::E004,
            "E005" => Code::E005,
            "W101" => Code::W101,
            "E999" => Code::E999,
            _ => return None,
        })
    }

    /// True for codes that make `analyze` exit nonzero.
    pub fn is_error(&self) -> bool {
        self.severity() == Severity::Error
    }
}

impl fmt::Display for Code {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_str())
    }
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Debug)]
pub enum Severity {
    Error,
    Warning,
}

impl Severity {
    pub fn as_str(&self) -> &'static str {
        match self {
            Severity::Error => "error",
            Severity::Warning => "warning",
        }
    }
}

/// A secondary location attached to a diagnostic, typically the site where
/// a pointer became invalid.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Debug)]
pub struct Note {
    pub loc: SourceLoc,
    pub text: String,
}

#[derive(Clone, Debug)]
pub struct Diagnostic {
    pub code: Code,
    pub loc: SourceLoc,
    pub message: String,
    pub notes: Vec<Note>,
}

impl Diagnostic {
    pub fn new(code: Code, loc: SourceLoc, message: impl Into<String>) -> Self {
        Diagnostic {
            code,
            loc,
            message: message.into(),
            notes: Vec::new(),
        }
    }

    pub fn with_notes(mut self, notes: Vec<Note>) -> Self {
        self.notes = notes;
        self
    }

    pub fn severity(&self) -> Severity {
        self.code.severity()
    }

    /// Clang-style text rendering, one primary line plus one line per note.
    pub fn render_text(&self, color: bool) -> String {
        use std::fmt::Write;
        let mut out = String::new();
        let sev = self.severity().as_str();
        if color {
            let tint = match self.severity() {
                Severity::Error => "\x1b[31m",
                Severity::Warning => "\x1b[33m",
            };
            let _ = writeln!(
                out,
                "{}: {}{}[{}]\x1b[0m: {}",
                self.loc, tint, sev, self.code, self.message
            );
        } else {
            let _ = writeln!(out, "{}: {}[{}]: {}", self.loc, sev, self.code, self.message);
        }
        for note in &self.notes {
            let _ = writeln!(out, "{}: note: {}", note.loc, note.text);
        }
        out
    }

    /// One-line JSON rendering for `--format=json`.
    pub fn render_json(&self) -> String {
        let notes: Vec<serde_json::Value> = self
            .notes
            .iter()
            .map(|n| {
                serde_json::json!({
                    "file": n.loc.file.as_ref(),
                    "line": n.loc.line,
                    "column": n.loc.column,
                    "text": n.text,
                })
            })
            .collect();
        serde_json::json!({
            "code": self.code.as_str(),
            "severity": self.severity().as_str(),
            "file": self.loc.file.as_ref(),
            "line": self.loc.line,
            "column": self.loc.column,
            "message": self.message,
            "notes": notes,
        })
        .to_string()
    }
}

/// Sorts by (file, line, column, code) and drops exact duplicates, making
/// output deterministic across runs and solver orders.
pub fn sort_diagnostics(diags: &mut Vec<Diagnostic>) {
    diags.sort_by(|a, b| {
        (&a.loc.file, a.loc.line, a.loc.column, a.code)
            .cmp(&(&b.loc.file, b.loc.line, b.loc.column, b.code))
    });
    diags.dedup_by(|a, b| {
        a.code == b.code && a.loc == b.loc && a.message == b.message && a.notes == b.notes
    });
}
