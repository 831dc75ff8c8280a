//! End-to-end analysis pipeline: parse, validate, normalize, solve and
//! check, collecting diagnostics along the way.

use crate::analysis::{seed_entry, solve, AnalysisCtx, DataflowResult, SolveOrder};
use crate::ast::Program;
use crate::check::{check_function, CheckConfig};
use crate::diag::{sort_diagnostics, Diagnostic};
use crate::normalize::{normalize_program, NormProgram};
use crate::parser::{parse_program, ParseError};
use crate::sema::{
    check_scopes, reject_pointer_arith, resolve_types, validate_annotations, validate_globals,
    SemaError,
};
use crate::typeclass::FactsSet;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{0}")]
    Parse(#[from] ParseError),
    #[error("{0}")]
    Sema(#[from] SemaError),
    #[error("{0}")]
    Solve(#[from] crate::analysis::SolveBudgetExceeded),
}

#[derive(Clone, Debug, Default)]
pub struct AnalyzeOptions {
    pub facts: Option<FactsSet>,
    pub warnings: bool,
    pub certain_only: bool,
    pub strict_calls: bool,
    pub order: Option<SolveOrder>,
}

pub struct FunctionAnalysis {
    pub name: String,
    pub result: DataflowResult,
}

pub struct Analysis {
    pub program: Program,
    pub norm: NormProgram,
    pub per_function: Vec<FunctionAnalysis>,
    pub diagnostics: Vec<Diagnostic>,
}

impl Analysis {
    pub fn function_result(&self, name: &str) -> Option<&DataflowResult> {
        self.per_function
            .iter()
            .find(|f| f.name == name)
            .map(|f| &f.result)
    }

    /// Deterministic per-node pmap dump used by `--dump-pmaps` and the
    /// golden tests.
    pub fn dump_pmaps(&self) -> String {
        use std::fmt::Write;
        let mut out = String::new();
        for fa in &self.per_function {
            let func = self
                .norm
                .function(&fa.name)
                .expect("analysis matches normalized program");
            let _ = writeln!(out, "function {}:", fa.name);
            for (i, node) in func.cfg.nodes.iter().enumerate() {
                let _ = writeln!(
                    out,
                    "  node {:>3} [{}] @{}:{} in: {}",
                    i,
                    node.instr,
                    node.loc.line,
                    node.loc.column,
                    fa.result.inputs[i].render()
                );
            }
        }
        out
    }

    pub fn dump_cfgs(&self) -> String {
        let mut out = String::new();
        for f in &self.norm.functions {
            out.push_str(&f.cfg.to_dot(&f.name));
        }
        out
    }
}

/// Analyzes an already-parsed program.
pub fn analyze_program(
    mut program: Program,
    opts: &AnalyzeOptions,
) -> Result<Analysis, PipelineError> {
    resolve_types(&mut program, opts.facts.as_ref())?;

    let mut diagnostics = Vec::new();
    diagnostics.extend(validate_annotations(&program));
    diagnostics.extend(validate_globals(&program));
    diagnostics.extend(reject_pointer_arith(&program));
    check_scopes(&program)?;

    let norm = normalize_program(&program)?;
    let order = opts.order.unwrap_or(SolveOrder::Fifo);
    let config = CheckConfig {
        warnings: opts.warnings,
        certain_only: opts.certain_only,
        strict_calls: opts.strict_calls,
    };

    let mut per_function = Vec::new();
    for func in &norm.functions {
        let ctx = AnalysisCtx::new(func, &norm.sigs, &norm.globals);
        let seed = seed_entry(&ctx);
        let result = solve(&func.cfg, &seed, &ctx, order)?;
        diagnostics.extend(result.internal.iter().cloned());
        diagnostics.extend(check_function(&ctx, &result, &config));
        per_function.push(FunctionAnalysis {
            name: func.name.clone(),
            result,
        });
    }

    sort_diagnostics(&mut diagnostics);
    Ok(Analysis {
        program,
        norm,
        per_function,
        diagnostics,
    })
}

/// Analyzes a source text end to end.
pub fn analyze_source(
    source: &str,
    file_name: &str,
    opts: &AnalyzeOptions,
) -> Result<Analysis, PipelineError> {
    let program = parse_program(source, file_name)?;
    analyze_program(program, opts)
}
