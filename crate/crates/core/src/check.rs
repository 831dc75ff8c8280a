//! Rule enforcement over the dataflow fixpoint: invalid dereferences,
//! moved-from owners, bad call arguments, and bad returns, each carrying
//! provenance notes pointing at the invalidation sites.

use crate::analysis::{AnalysisCtx, DataflowResult};
use crate::ast::{AnnotationKind, LifetimeToken, TypeKind};
use crate::cfg::Instr;
use crate::diag::{Code, Diagnostic, Note};
use crate::loc::SourceLoc;
use crate::normalize::display_name;
use crate::pset::{Pmap, Pset, PsetEntry};
use std::collections::BTreeSet;

#[derive(Clone, Debug)]
pub struct CheckConfig {
    /// Enables W101 possible-null-dereference warnings.
    pub warnings: bool,
    /// Restricts E001/E002 to psets that are exactly `{invalid}`.
    pub certain_only: bool,
    /// Reports calls to unknown functions instead of assuming defaults.
    pub strict_calls: bool,
}

impl Default for CheckConfig {
    fn default() -> Self {
        CheckConfig {
            warnings: false,
            certain_only: false,
            strict_calls: false,
        }
    }
}

fn prov_notes(d: &Pmap, var: &str) -> Vec<Note> {
    let mut notes: Vec<Note> = d
        .notes(var)
        .into_iter()
        .map(|n| Note {
            loc: n.loc.clone(),
            text: format!("'{}' {}", display_name(var), n.reason.describe()),
        })
        .collect();
    notes.sort();
    notes.dedup();
    notes
}

fn pset_of<'a>(d: &'a Pmap, var: &str) -> Option<&'a Pset> {
    d.get(var)
}

fn has_invalid(pset: &Pset) -> bool {
    pset.contains(&PsetEntry::Invalid)
}

fn only_invalid(pset: &Pset) -> bool {
    pset.len() == 1 && has_invalid(pset)
}

/// Checks one function against the solved dataflow result.
pub fn check_function(
    ctx: &AnalysisCtx,
    result: &DataflowResult,
    config: &CheckConfig,
) -> Vec<Diagnostic> {
    let mut diags = Vec::new();
    let cfg = &ctx.func.cfg;
    for (id, node) in cfg.nodes.iter().enumerate() {
        let input = &result.inputs[id];
        match &node.instr {
            Instr::DerefRead { ptr, .. } | Instr::DerefWrite { ptr, .. } => {
                check_deref(ptr, input, &node.loc, ctx, config, &mut diags);
            }
            Instr::Dealloc { ptr } => {
                check_deref(ptr, input, &node.loc, ctx, config, &mut diags);
                check_dealloc_target(ptr, input, &node.loc, &mut diags);
            }
            Instr::Call {
                callee,
                args,
                ..
            } => {
                check_call(callee, args, input, &node.loc, ctx, config, &mut diags);
            }
            Instr::Return { value: Some(v) } => {
                check_return(v, input, &node.loc, ctx, &mut diags);
            }
            _ => {}
        }
    }
    diags
}

/// Rules 1 and 2: dereferencing through a possibly invalid Pointer or a
/// moved-from Owner.
fn check_deref(
    ptr: &str,
    input: &Pmap,
    loc: &SourceLoc,
    ctx: &AnalysisCtx,
    config: &CheckConfig,
    diags: &mut Vec<Diagnostic>,
) {
    let class = ctx.class_of(ptr).map(|c| c.kind);
    let pset = match pset_of(input, ptr) {
        Some(p) => p.clone(),
        None => match class {
            // Globals are never invalidated; Values carry no address.
            Some(TypeKind::Value) if ctx.local_class(ptr).is_some() => {
                diags.push(Diagnostic::new(
                    Code::E001,
                    loc.clone(),
                    format!(
                        "dereference of '{}', which is a Value and holds no address",
                        display_name(ptr)
                    ),
                ));
                return;
            }
            _ => return,
        },
    };
    let fires = if config.certain_only {
        only_invalid(&pset)
    } else {
        has_invalid(&pset)
    };
    if fires {
        let (code, what) = match class {
            Some(TypeKind::Owner) => (Code::E002, "moved-from or invalidated Owner"),
            _ => (Code::E001, "possibly invalid Pointer"),
        };
        diags.push(
            Diagnostic::new(
                code,
                loc.clone(),
                format!("dereference of {} '{}'", what, display_name(ptr)),
            )
            .with_notes(prov_notes(input, ptr)),
        );
    } else if config.warnings && pset.contains(&PsetEntry::Null) {
        diags.push(Diagnostic::new(
            Code::W101,
            loc.clone(),
            format!("'{}' may be null here", display_name(ptr)),
        ));
    }
}

/// Deallocation is only defined for heads of heap blocks: psets containing
/// variable addresses, null, or const-global memory flag a bad free.
fn check_dealloc_target(
    ptr: &str,
    input: &Pmap,
    loc: &SourceLoc,
    diags: &mut Vec<Diagnostic>,
) {
    let pset = match pset_of(input, ptr) {
        Some(p) => p,
        None => return,
    };
    for entry in pset {
        match entry {
            PsetEntry::Var { name, level: 0 } => {
                diags.push(Diagnostic::new(
                    Code::E001,
                    loc.clone(),
                    format!(
                        "deallocation through '{}' may free the address of variable '{}', which is not a heap block",
                        display_name(ptr),
                        display_name(name)
                    ),
                ));
            }
            PsetEntry::Null => {
                diags.push(Diagnostic::new(
                    Code::E001,
                    loc.clone(),
                    format!(
                        "deallocation through '{}' may free a null pointer",
                        display_name(ptr)
                    ),
                ));
            }
            PsetEntry::Global => {
                diags.push(Diagnostic::new(
                    Code::E001,
                    loc.clone(),
                    format!(
                        "deallocation through '{}' may free static memory",
                        display_name(ptr)
                    ),
                ));
            }
            _ => {}
        }
    }
}

/// Entries `o'`, `o''`, ... of non-const Owner `o`.
fn family_members(pset: &Pset, ctx: &AnalysisCtx) -> BTreeSet<String> {
    pset.iter()
        .filter_map(|e| match e {
            PsetEntry::Var { name, level } if *level >= 1 => {
                let class = ctx.class_of(name)?;
                (class.kind == TypeKind::Owner && !class.is_const).then(|| name.clone())
            }
            _ => None,
        })
        .collect()
}

/// Rule 4 plus the default precondition.
fn check_call(
    callee: &str,
    args: &[String],
    input: &Pmap,
    loc: &SourceLoc,
    ctx: &AnalysisCtx,
    config: &CheckConfig,
    diags: &mut Vec<Diagnostic>,
) {
    let sig = ctx.sigs.get(callee);
    if sig.is_none() && config.strict_calls {
        diags.push(Diagnostic::new(
            Code::E004,
            loc.clone(),
            format!("call to unknown function '{}'", callee),
        ));
    }

    let arg_kind = |arg: &str| ctx.class_of(arg).map(|c| c.kind);

    // Invalid Pointer arguments.
    for arg in args {
        if arg_kind(arg) != Some(TypeKind::Pointer) {
            continue;
        }
        if let Some(pset) = pset_of(input, arg) {
            if has_invalid(pset) && (!config.certain_only || only_invalid(pset)) {
                diags.push(
                    Diagnostic::new(
                        Code::E004,
                        loc.clone(),
                        format!(
                            "passing possibly invalid Pointer '{}' to '{}'",
                            display_name(arg),
                            callee
                        ),
                    )
                    .with_notes(prov_notes(input, arg)),
                );
            }
        }
    }

    // Explicit preconditions: the argument's pset must equal the
    // interpretation of at least one token.
    let mut has_pre = false;
    if let Some(sig) = sig {
        for ann in &sig.annotations {
            if ann.kind != AnnotationKind::Pre {
                continue;
            }
            has_pre = true;
            let actual = sig
                .params
                .iter()
                .position(|(n, _, _)| *n == ann.target)
                .and_then(|i| args.get(i));
            let actual = match actual {
                Some(a) => a,
                None => continue,
            };
            let actual_pset = match pset_of(input, actual) {
                Some(p) => p.clone(),
                None => continue,
            };
            let mut satisfied = false;
            for token in &ann.lifetimes {
                let interp: Option<Pset> = match token {
                    LifetimeToken::Null => Some([PsetEntry::Null].into_iter().collect()),
                    LifetimeToken::Global => Some([PsetEntry::Global].into_iter().collect()),
                    LifetimeToken::Invalid => Some([PsetEntry::Invalid].into_iter().collect()),
                    LifetimeToken::Param(p) => sig
                        .params
                        .iter()
                        .position(|(n, _, _)| n == p)
                        .and_then(|i| args.get(i))
                        .and_then(|a| pset_of(input, a).cloned()),
                };
                if interp.as_ref() == Some(&actual_pset) {
                    satisfied = true;
                    break;
                }
            }
            if !satisfied {
                diags.push(
                    Diagnostic::new(
                        Code::E004,
                        loc.clone(),
                        format!(
                            "argument '{}' does not satisfy the precondition of parameter '{}' of '{}'",
                            display_name(actual),
                            ann.target,
                            callee
                        ),
                    )
                    .with_notes(prov_notes(input, actual)),
                );
            }
        }
    }

    // Default precondition, applied when the callee declares none.
    if has_pre {
        return;
    }
    let pointer_args: Vec<&String> = args
        .iter()
        .filter(|a| arg_kind(a) == Some(TypeKind::Pointer))
        .collect();

    // (a) no Pointer argument may point into a non-const global Owner;
    // (b) nor into a local Owner passed by non-const reference here.
    let mut ref_owner_args: BTreeSet<String> = BTreeSet::new();
    for (i, arg) in args.iter().enumerate() {
        if arg_kind(arg) != Some(TypeKind::Owner) {
            continue;
        }
        let arg_const = ctx.class_of(arg).map(|c| c.is_const).unwrap_or(false);
        let (param_const, by_ref) = match sig.and_then(|s| s.params.get(i)) {
            Some((_, c, r)) => (c.is_const, *r),
            // Unknown callee: assume mutable by-reference access.
            None => (false, true),
        };
        if by_ref && !param_const && !arg_const {
            ref_owner_args.insert(arg.clone());
        }
    }
    for arg in &pointer_args {
        let pset = match pset_of(input, arg) {
            Some(p) => p,
            None => continue,
        };
        for owner in family_members(pset, ctx) {
            let is_global = ctx.global_class(&owner).is_some();
            if is_global {
                diags.push(Diagnostic::new(
                    Code::E004,
                    loc.clone(),
                    format!(
                        "Pointer argument '{}' may point into non-const global Owner '{}'",
                        display_name(arg),
                        display_name(&owner)
                    ),
                ));
            } else if ref_owner_args.contains(&owner) {
                diags.push(Diagnostic::new(
                    Code::E004,
                    loc.clone(),
                    format!(
                        "Pointer argument '{}' points into Owner '{}', which is passed by non-const reference in the same call",
                        display_name(arg),
                        display_name(&owner)
                    ),
                ));
            }
        }
    }

    // (c) no two Pointer arguments may point into the same non-const Owner.
    for i in 0..pointer_args.len() {
        for j in (i + 1)..pointer_args.len() {
            let (pa, pb) = (pointer_args[i], pointer_args[j]);
            let (sa, sb) = match (pset_of(input, pa), pset_of(input, pb)) {
                (Some(a), Some(b)) => (a, b),
                _ => continue,
            };
            let shared: BTreeSet<String> = family_members(sa, ctx)
                .intersection(&family_members(sb, ctx))
                .cloned()
                .collect();
            for owner in shared {
                diags.push(Diagnostic::new(
                    Code::E004,
                    loc.clone(),
                    format!(
                        "Pointer arguments '{}' and '{}' both point into non-const Owner '{}'",
                        display_name(pa),
                        display_name(pb),
                        display_name(&owner)
                    ),
                ));
            }
        }
    }
}

/// Rule 5 plus the default postcondition.
fn check_return(
    value: &str,
    input: &Pmap,
    loc: &SourceLoc,
    ctx: &AnalysisCtx,
    diags: &mut Vec<Diagnostic>,
) {
    if ctx.class_of(value).map(|c| c.kind) != Some(TypeKind::Pointer) {
        return;
    }
    let pset = match pset_of(input, value) {
        Some(p) => p.clone(),
        None => return,
    };
    if has_invalid(&pset) {
        diags.push(
            Diagnostic::new(
                Code::E005,
                loc.clone(),
                format!(
                    "returning possibly invalid Pointer '{}'",
                    display_name(value)
                ),
            )
            .with_notes(prov_notes(input, value)),
        );
        return;
    }

    let post = ctx
        .func
        .annotations
        .iter()
        .find(|a| a.kind == AnnotationKind::Post);
    match post {
        Some(ann) => {
            let mut satisfied = false;
            for token in &ann.lifetimes {
                let interp: Option<Pset> = match token {
                    LifetimeToken::Null => Some([PsetEntry::Null].into_iter().collect()),
                    LifetimeToken::Global => Some([PsetEntry::Global].into_iter().collect()),
                    LifetimeToken::Invalid => Some([PsetEntry::Invalid].into_iter().collect()),
                    LifetimeToken::Param(p) => pset_of(input, p).cloned(),
                };
                if interp.as_ref() == Some(&pset) {
                    satisfied = true;
                    break;
                }
            }
            if !satisfied {
                diags.push(
                    Diagnostic::new(
                        Code::E005,
                        loc.clone(),
                        format!(
                            "returned Pointer '{}' does not satisfy the postcondition of '{}'",
                            display_name(value),
                            ctx.func.name
                        ),
                    )
                    .with_notes(prov_notes(input, value)),
                );
            }
        }
        None => {
            // Default postcondition: the returned pset may only reference
            // memory that outlives the call.
            for entry in &pset {
                let bad = match entry {
                    PsetEntry::Null | PsetEntry::Global => None,
                    PsetEntry::Invalid => None, // reported above
                    PsetEntry::Var { name, level } => {
                        if outlives_entry(name, *level, ctx) {
                            None
                        } else {
                            Some(name.clone())
                        }
                    }
                };
                if let Some(name) = bad {
                    diags.push(
                        Diagnostic::new(
                            Code::E005,
                            loc.clone(),
                            format!(
                                "returning Pointer '{}' into function-local storage '{}'",
                                display_name(value),
                                display_name(&name)
                            ),
                        )
                        .with_notes(prov_notes(input, value)),
                    );
                }
            }
        }
    }
}

/// Whether a pset entry rooted at `name` refers to memory that survives
/// the function return.
fn outlives_entry(name: &str, level: u8, ctx: &AnalysisCtx) -> bool {
    if ctx.global_class(name).is_some() {
        return true;
    }
    if ctx.func.heap_owners.contains(name) || ctx.param_owners.values().any(|o| o == name) {
        // The owned memory outlives the call; the synthetic variable's own
        // cell does not exist for callers.
        return level >= 1;
    }
    if let Some((_, class, by_ref)) = ctx.func.params.iter().find(|(n, _, _)| n == name) {
        return match class.kind {
            // A by-value parameter's own cell dies with the frame, but an
            // Owner parameter's owned object is the caller's.
            TypeKind::Owner => level >= 1 || *by_ref,
            _ => *by_ref,
        };
    }
    false
}
