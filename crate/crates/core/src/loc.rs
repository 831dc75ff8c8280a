//! Source locations attached to every syntax node and diagnostic.

use std::fmt;
use std::sync::Arc;

/// A 1-based line/column position within a named input file.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SourceLoc {
    pub file: Arc<str>,
    pub line: u32,
    pub column: u32,
}

impl SourceLoc {
    pub fn new(file: &Arc<str>, line: u32, column: u32) -> Self {
        debug_assert!(line >= 1 && column >= 1);
        SourceLoc {
            file: Arc::clone(file),
            line,
            column,
        }
    }

    /// Placeholder location for synthesized nodes that have no better anchor.
    pub fn synthetic(file: &Arc<str>) -> Self {
        SourceLoc {
            file: Arc::clone(file),
            line: 1,
            column: 1,
        }
    }
}

impl fmt::Display for SourceLoc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.file, self.line, self.column)
    }
}

impl fmt::Debug for SourceLoc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self)
    }
}
