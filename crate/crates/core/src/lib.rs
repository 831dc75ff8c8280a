//! lifecheck: a use-after-free static analyzer for a small imperative
//! language with Owner/Pointer/Value memory classes.
//!
//! The pipeline parses `.lt` sources, lowers them to explicit
//! create/destroy form, builds per-function control flow graphs, solves a
//! points-to dataflow system and enforces the lifetime rules over the
//! fixpoint. A concrete small-step interpreter executes the same programs
//! and serves as the ground-truth oracle for differential testing, driven
//! by a deterministic random program generator.

pub mod analysis;
pub mod ast;
pub mod cfg;
pub mod check;
pub mod corpus;
pub mod diag;
pub mod gen;
pub mod interp;
pub mod lexer;
pub mod loc;
pub mod normalize;
pub mod parser;
pub mod pipeline;
pub mod pretty;
pub mod pset;
pub mod sema;
pub mod typeclass;

pub use diag::{Code, Diagnostic, Severity};
pub use loc::SourceLoc;
