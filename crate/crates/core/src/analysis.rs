//! The dataflow instantiation: per-instruction transfer functions,
//! parameter seeding, and the worklist fixpoint solver.

use crate::ast::{AnnotationKind, LifetimeToken, TypeClass, TypeKind};
use crate::cfg::{Cfg, Instr, NodeId, Operand};
use crate::diag::{Code, Diagnostic};
use crate::loc::SourceLoc;
use crate::normalize::{NormFunction, SigTable};
use crate::pset::{
    invalidate, invalidate_levels, join, InvalidationNote, InvalidationReason, NoteSet, Pmap,
    Pset, PsetEntry, MAX_LEVEL,
};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use std::collections::{BTreeMap, BTreeSet, VecDeque};

/// Everything the transfer functions need to know about the surrounding
/// program: the function being analyzed, the signature table, and global
/// variables.
pub struct AnalysisCtx<'a> {
    pub func: &'a NormFunction,
    pub sigs: &'a SigTable,
    pub globals: &'a BTreeMap<String, TypeClass>,
    /// Synthetic owner backing each unannotated Pointer parameter.
    pub param_owners: BTreeMap<String, String>,
}

impl<'a> AnalysisCtx<'a> {
    pub fn new(
        func: &'a NormFunction,
        sigs: &'a SigTable,
        globals: &'a BTreeMap<String, TypeClass>,
    ) -> Self {
        let mut param_owners = BTreeMap::new();
        for (name, class, _) in &func.params {
            if class.kind == TypeKind::Pointer {
                let mut owner = format!("__param_{}", name);
                while func.var_classes.contains_key(&owner) || globals.contains_key(&owner) {
                    owner.push('%');
                }
                param_owners.insert(name.clone(), owner);
            }
        }
        AnalysisCtx {
            func,
            sigs,
            globals,
            param_owners,
        }
    }

    /// Class of a local (including temporaries and synthetic owners).
    pub fn local_class(&self, name: &str) -> Option<TypeClass> {
        if let Some(c) = self.func.var_classes.get(name) {
            return Some(*c);
        }
        if self.param_owners.values().any(|o| o == name) {
            return Some(TypeClass::owner());
        }
        None
    }

    pub fn global_class(&self, name: &str) -> Option<TypeClass> {
        self.globals.get(name).copied()
    }

    pub fn class_of(&self, name: &str) -> Option<TypeClass> {
        self.local_class(name).or_else(|| self.global_class(name))
    }

    pub fn is_owner(&self, name: &str) -> bool {
        self.class_of(name).map(|c| c.kind) == Some(TypeKind::Owner)
    }

    /// Owner names whose memory outlives the function: heap allocations,
    /// parameter-backed synthetic owners, Owner parameters, and globals.
    pub fn outlives_function(&self, owner: &str) -> bool {
        self.func.heap_owners.contains(owner)
            || self.param_owners.values().any(|o| o == owner)
            || self
                .func
                .params
                .iter()
                .any(|(n, c, _)| n == owner && c.kind == TypeKind::Owner)
            || self.globals.contains_key(owner)
    }
}

fn note(loc: &SourceLoc, reason: InvalidationReason) -> InvalidationNote {
    InvalidationNote {
        loc: loc.clone(),
        reason,
    }
}

fn singleton(entry: PsetEntry) -> Pset {
    [entry].into_iter().collect()
}

/// Pset (and provenance) for reading variable `name` as a source operand.
/// Locals come from the pmap; globals synthesize their entry.
fn read_var(
    d: &Pmap,
    name: &str,
    loc: &SourceLoc,
    ctx: &AnalysisCtx,
    diags: &mut Vec<Diagnostic>,
) -> (Pset, NoteSet) {
    if let Some(pset) = d.get(name) {
        return (pset.clone(), d.notes(name));
    }
    if let Some(class) = ctx.local_class(name) {
        // A tracked-class local missing from the pmap means its creation
        // does not dominate this use.
        if class.kind == TypeKind::Value {
            return (
                singleton(PsetEntry::Invalid),
                [note(loc, InvalidationReason::NonAddress)].into_iter().collect(),
            );
        }
        diags.push(Diagnostic::new(
            Code::E999,
            loc.clone(),
            format!("internal: '{}' read before it entered the points-to map", name),
        ));
        return (
            singleton(PsetEntry::Invalid),
            [note(loc, InvalidationReason::Internal)].into_iter().collect(),
        );
    }
    if let Some(class) = ctx.global_class(name) {
        let pset = match class.kind {
            TypeKind::Owner if !class.is_const => singleton(PsetEntry::var(name, 1)),
            TypeKind::Owner => singleton(PsetEntry::Global),
            TypeKind::Value => singleton(PsetEntry::Invalid),
            TypeKind::Pointer => singleton(PsetEntry::Global),
        };
        return (pset, NoteSet::new());
    }
    diags.push(Diagnostic::new(
        Code::E999,
        loc.clone(),
        format!("internal: unknown operand '{}'", name),
    ));
    (
        singleton(PsetEntry::Invalid),
        [note(loc, InvalidationReason::Internal)].into_iter().collect(),
    )
}

/// The pset of `*v` given the pset of `v`: owner families deepen one prime
/// level (saturating), level-0 pointers chase the pointee's current pset,
/// `global` stays `global`, and `null`/`invalid`/non-address entries
/// dereference to `invalid`.
fn deref_pset(d: &Pmap, pset: &Pset, notes: &NoteSet, loc: &SourceLoc, ctx: &AnalysisCtx) -> (Pset, NoteSet) {
    let mut out = Pset::new();
    let mut out_notes: NoteSet = notes.clone();
    for entry in pset {
        match entry {
            PsetEntry::Var { name, level } => {
                let class = ctx.class_of(name).map(|c| c.kind);
                match (class, *level) {
                    (Some(TypeKind::Owner), lvl) => {
                        out.insert(PsetEntry::var(name, (lvl + 1).min(MAX_LEVEL)));
                    }
                    (Some(TypeKind::Pointer), 0) => {
                        if let Some(target) = d.get(name) {
                            out.extend(target.iter().cloned());
                            out_notes.extend(d.notes(name));
                        } else {
                            out.insert(PsetEntry::Invalid);
                            out_notes.insert(note(loc, InvalidationReason::Internal));
                        }
                    }
                    _ => {
                        // Reading a non-address cell as an address.
                        out.insert(PsetEntry::Invalid);
                        out_notes.insert(note(loc, InvalidationReason::NonAddress));
                    }
                }
            }
            PsetEntry::Global => {
                out.insert(PsetEntry::Global);
            }
            PsetEntry::Null => {
                out.insert(PsetEntry::Invalid);
                out_notes.insert(note(loc, InvalidationReason::DerefNull));
            }
            PsetEntry::Invalid => {
                out.insert(PsetEntry::Invalid);
            }
        }
    }
    if out.is_empty() {
        out.insert(PsetEntry::Invalid);
    }
    (out, out_notes)
}

fn copy_source(
    d: &Pmap,
    src: &Operand,
    loc: &SourceLoc,
    ctx: &AnalysisCtx,
    diags: &mut Vec<Diagnostic>,
) -> (Pset, NoteSet) {
    match src {
        Operand::Var(name) => read_var(d, name, loc, ctx, diags),
        Operand::Null => (singleton(PsetEntry::Null), NoteSet::new()),
        Operand::Const(_) => (
            singleton(PsetEntry::Invalid),
            [note(loc, InvalidationReason::NonAddress)].into_iter().collect(),
        ),
    }
}

fn tracked(ctx: &AnalysisCtx, var: &str) -> bool {
    matches!(
        ctx.local_class(var).map(|c| c.kind),
        Some(TypeKind::Pointer) | Some(TypeKind::Owner)
    )
}

/// φ_i: the transfer function of one instruction.
pub fn transfer(instr: &Instr, d: &Pmap, loc: &SourceLoc, ctx: &AnalysisCtx) -> Pmap {
    let mut diags = Vec::new();
    transfer_with_diags(instr, d, loc, ctx, &mut diags)
}

pub fn transfer_with_diags(
    instr: &Instr,
    d: &Pmap,
    loc: &SourceLoc,
    ctx: &AnalysisCtx,
    diags: &mut Vec<Diagnostic>,
) -> Pmap {
    match instr {
        Instr::Create { var, class } => match class.kind {
            TypeKind::Owner => {
                let mut out = d.clone();
                out.bind(var, singleton(PsetEntry::var(var, 1)), NoteSet::new());
                out
            }
            TypeKind::Pointer => {
                let mut out = d.clone();
                out.bind(
                    var,
                    singleton(PsetEntry::Invalid),
                    [note(loc, InvalidationReason::NeverAssigned)].into_iter().collect(),
                );
                out
            }
            TypeKind::Value => {
                let mut out = d.clone();
                out.remove(var);
                out
            }
        },
        Instr::Destroy { var } => {
            let mut out = d.clone();
            out.remove(var);
            let victims = [var.clone()].into_iter().collect();
            invalidate(
                &out,
                &victims,
                note(loc, InvalidationReason::Destroyed(var.clone())),
            )
        }
        Instr::OwnerUse { owner, is_const } => {
            if *is_const {
                return d.clone();
            }
            let victims = [owner.clone()].into_iter().collect();
            invalidate_levels(
                d,
                &victims,
                1,
                note(loc, InvalidationReason::OwnerMutated(owner.clone())),
            )
        }
        Instr::Copy { dst, src } => {
            if !tracked(ctx, dst) {
                return d.clone();
            }
            let (pset, notes) = copy_source(d, src, loc, ctx, diags);
            let mut out = d.clone();
            out.bind(dst, pset, notes);
            out
        }
        Instr::MoveAssign { dst, src } => {
            let mut out = d.clone();
            let (pset, notes) = read_var(d, src, loc, ctx, diags);
            if tracked(ctx, dst) {
                out.bind(dst, pset, notes);
            }
            if out.contains_var(src) || tracked(ctx, src) {
                out.bind(
                    src,
                    singleton(PsetEntry::Invalid),
                    [note(loc, InvalidationReason::MovedFrom(src.clone()))]
                        .into_iter()
                        .collect(),
                );
            }
            out
        }
        Instr::TakeAddress { dst, var } => {
            if !tracked(ctx, dst) {
                return d.clone();
            }
            let pset = if ctx.local_class(var).is_some() {
                singleton(PsetEntry::var(var, 0))
            } else if let Some(class) = ctx.global_class(var) {
                if class.kind == TypeKind::Owner && !class.is_const {
                    singleton(PsetEntry::var(var, 0))
                } else {
                    singleton(PsetEntry::Global)
                }
            } else {
                diags.push(Diagnostic::new(
                    Code::E999,
                    loc.clone(),
                    format!("internal: address of unknown variable '{}'", var),
                ));
                singleton(PsetEntry::Invalid)
            };
            let mut out = d.clone();
            out.bind(dst, pset, NoteSet::new());
            out
        }
        Instr::DerefRead { dst, ptr } => {
            if !tracked(ctx, dst) {
                return d.clone();
            }
            let (pset, notes) = read_var(d, ptr, loc, ctx, diags);
            let (dpset, dnotes) = deref_pset(d, &pset, &notes, loc, ctx);
            let mut out = d.clone();
            out.bind(dst, dpset, dnotes);
            out
        }
        Instr::DerefWrite { .. } => d.clone(),
        Instr::AllocAssign { dst, site, .. } => {
            let mut out = d.clone();
            out.bind(site, singleton(PsetEntry::var(site, 1)), NoteSet::new());
            if tracked(ctx, dst) {
                out.bind(dst, singleton(PsetEntry::var(site, 1)), NoteSet::new());
            }
            out
        }
        Instr::Dealloc { ptr } => {
            let (pset, _) = read_var(d, ptr, loc, ctx, diags);
            let victims: BTreeSet<String> = pset
                .iter()
                .filter_map(|e| e.var_name().map(str::to_string))
                .collect();
            if victims.is_empty() {
                return d.clone();
            }
            invalidate(
                d,
                &victims,
                note(loc, InvalidationReason::DeallocatedThrough(ptr.clone())),
            )
        }
        Instr::Compute { dst, .. } => {
            if !tracked(ctx, dst) {
                return d.clone();
            }
            let mut out = d.clone();
            out.bind(
                dst,
                singleton(PsetEntry::Invalid),
                [note(loc, InvalidationReason::PointerArith)].into_iter().collect(),
            );
            out
        }
        Instr::Call {
            result,
            callee,
            args,
        } => transfer_call(result.as_deref(), callee, args, d, loc, ctx, diags),
        Instr::Return { .. } | Instr::Nop { .. } => d.clone(),
    }
}

/// Argument psets are captured before owner invalidation: a returned
/// pointer refers to the owner's post-call allocation, which the call
/// itself cannot have invalidated.
fn transfer_call(
    result: Option<&str>,
    callee: &str,
    args: &[String],
    d: &Pmap,
    loc: &SourceLoc,
    ctx: &AnalysisCtx,
    diags: &mut Vec<Diagnostic>,
) -> Pmap {
    let sig = ctx.sigs.get(callee);

    // Result pset from the postcondition (or the default one), computed on
    // the pre-call pmap.
    let result_bind: Option<(Pset, NoteSet)> = result.and_then(|r| {
        if !tracked(ctx, r) {
            return None;
        }
        let post = sig.and_then(|s| {
            s.annotations
                .iter()
                .find(|a| a.kind == AnnotationKind::Post)
        });
        let mut pset = Pset::new();
        let mut notes = NoteSet::new();
        match post {
            Some(ann) => {
                for token in &ann.lifetimes {
                    match token {
                        LifetimeToken::Null => {
                            pset.insert(PsetEntry::Null);
                        }
                        LifetimeToken::Global => {
                            pset.insert(PsetEntry::Global);
                        }
                        LifetimeToken::Invalid => {
                            pset.insert(PsetEntry::Invalid);
                            notes.insert(note(loc, InvalidationReason::AnnotatedInvalid));
                        }
                        LifetimeToken::Param(p) => {
                            if let Some(actual) = actual_for(sig, args, p) {
                                let (ps, ns) = read_var(d, actual, loc, ctx, diags);
                                pset.extend(ps);
                                notes.extend(ns);
                            }
                        }
                    }
                }
            }
            None => {
                // Default postcondition: derived from the arguments, and
                // possibly null.
                for (i, arg) in args.iter().enumerate() {
                    let class = arg_class(sig, i, arg, ctx);
                    match class.map(|c| c.kind) {
                        Some(TypeKind::Pointer) => {
                            let (ps, ns) = read_var(d, arg, loc, ctx, diags);
                            pset.extend(ps);
                            notes.extend(ns);
                        }
                        Some(TypeKind::Owner) => {
                            pset.insert(PsetEntry::var(arg, 1));
                        }
                        _ => {}
                    }
                }
                pset.insert(PsetEntry::Null);
            }
        }
        if pset.is_empty() {
            pset.insert(PsetEntry::Null);
        }
        Some((pset, notes))
    });

    // Non-const Owner arguments may be reallocated by the callee.
    let mut owner_victims: BTreeSet<String> = BTreeSet::new();
    // By-reference non-const Pointer parameters may be rewritten by the
    // callee; their pset becomes the default argument-derived set.
    let mut reseed_ptrs: Vec<String> = Vec::new();
    for (i, arg) in args.iter().enumerate() {
        let class = match arg_class(sig, i, arg, ctx) {
            Some(c) => c,
            None => continue,
        };
        let param = sig.and_then(|s| s.params.get(i));
        let param_const = param.map(|(_, c, _)| c.is_const).unwrap_or(false);
        let by_ref = param.map(|(_, _, r)| *r).unwrap_or(false);
        let arg_const = ctx.class_of(arg).map(|c| c.is_const).unwrap_or(false);
        match class.kind {
            TypeKind::Owner => {
                if !param_const && !arg_const {
                    owner_victims.insert(arg.clone());
                }
            }
            TypeKind::Pointer => {
                if by_ref && !param_const {
                    reseed_ptrs.push(arg.clone());
                }
            }
            TypeKind::Value => {}
        }
    }

    let mut out = if owner_victims.is_empty() {
        d.clone()
    } else {
        let mut acc = d.clone();
        for owner in &owner_victims {
            let victims = [owner.clone()].into_iter().collect();
            acc = invalidate_levels(
                &acc,
                &victims,
                1,
                note(loc, InvalidationReason::OwnerMutated(owner.clone())),
            );
        }
        acc
    };

    if !reseed_ptrs.is_empty() {
        let mut derived = Pset::new();
        for (i, arg) in args.iter().enumerate() {
            match arg_class(sig, i, arg, ctx).map(|c| c.kind) {
                Some(TypeKind::Pointer) => {
                    let (ps, _) = read_var(d, arg, loc, ctx, diags);
                    derived.extend(ps);
                }
                Some(TypeKind::Owner) => {
                    derived.insert(PsetEntry::var(arg, 1));
                }
                _ => {}
            }
        }
        derived.insert(PsetEntry::Null);
        derived.insert(PsetEntry::Global);
        for ptr in reseed_ptrs {
            out.bind(&ptr, derived.clone(), NoteSet::new());
        }
    }

    if let (Some(r), Some((pset, notes))) = (result, result_bind) {
        out.bind(r, pset, notes);
    }
    out
}

fn actual_for<'a>(
    sig: Option<&crate::normalize::SigInfo>,
    args: &'a [String],
    param: &str,
) -> Option<&'a str> {
    let sig = sig?;
    let idx = sig.params.iter().position(|(n, _, _)| n == param)?;
    args.get(idx).map(|s| s.as_str())
}

fn arg_class(
    sig: Option<&crate::normalize::SigInfo>,
    index: usize,
    arg: &str,
    ctx: &AnalysisCtx,
) -> Option<TypeClass> {
    // The argument's own class decides what the call can do to it; fall
    // back to the parameter class for literals routed through temps.
    ctx.class_of(arg)
        .or_else(|| sig.and_then(|s| s.params.get(index).map(|(_, c, _)| *c)))
}

// ---------------------------------------------------------------------
// Seeding

/// Token interpretation at function entry: a parameter token contributes
/// the base seed of that parameter.
fn base_seed(param: &str, ctx: &AnalysisCtx) -> Option<Pset> {
    let (_, class, _) = ctx.func.params.iter().find(|(n, _, _)| n == param)?;
    match class.kind {
        TypeKind::Owner => Some(singleton(PsetEntry::var(param, 1))),
        TypeKind::Pointer => {
            let owner = ctx.param_owners.get(param)?;
            Some(singleton(PsetEntry::var(owner, 1)))
        }
        TypeKind::Value => None,
    }
}

/// Builds the entry pmap: Owner parameters own their object, annotated
/// Pointer parameters take their precondition set, and unannotated
/// Pointer parameters point into a fresh synthetic owner.
pub fn seed_entry(ctx: &AnalysisCtx) -> Pmap {
    let mut seed = Pmap::bottom();
    for (name, class, _) in &ctx.func.params {
        match class.kind {
            TypeKind::Owner => {
                seed.bind(name, singleton(PsetEntry::var(name, 1)), NoteSet::new());
            }
            TypeKind::Pointer => {
                let pre = ctx
                    .func
                    .annotations
                    .iter()
                    .find(|a| a.kind == AnnotationKind::Pre && a.target == *name);
                let mut pset = Pset::new();
                let mut notes = NoteSet::new();
                if let Some(ann) = pre {
                    for token in &ann.lifetimes {
                        match token {
                            LifetimeToken::Null => {
                                pset.insert(PsetEntry::Null);
                            }
                            LifetimeToken::Global => {
                                pset.insert(PsetEntry::Global);
                            }
                            LifetimeToken::Invalid => {
                                pset.insert(PsetEntry::Invalid);
                                notes.insert(note(
                                    &ann.loc,
                                    InvalidationReason::AnnotatedInvalid,
                                ));
                            }
                            LifetimeToken::Param(p) => {
                                if let Some(base) = base_seed(p, ctx) {
                                    pset.extend(base);
                                }
                            }
                        }
                    }
                }
                if pset.is_empty() {
                    pset = base_seed(name, ctx).unwrap_or_else(|| singleton(PsetEntry::Invalid));
                }
                seed.bind(name, pset, notes);
            }
            TypeKind::Value => {}
        }
    }
    seed
}

// ---------------------------------------------------------------------
// Solver

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolveOrder {
    Fifo,
    Lifo,
    Random(u64),
}

#[derive(Clone, Debug)]
pub struct DataflowResult {
    pub inputs: Vec<Pmap>,
    pub outputs: Vec<Pmap>,
    /// Internal-consistency diagnostics produced during transfer.
    pub internal: Vec<Diagnostic>,
}

#[derive(Debug, thiserror::Error)]
#[error("dataflow solver exceeded its iteration budget in '{function}' ({budget} pops)")]
pub struct SolveBudgetExceeded {
    pub function: String,
    pub budget: usize,
}

/// Worklist fixpoint. Every node's input is the join of its predecessors'
/// outputs (the entry also joins the seed); iteration continues until both
/// psets and provenance stabilize. The domain is finite, so the budget
/// guard only trips on an implementation bug.
pub fn solve(
    cfg: &Cfg,
    seed: &Pmap,
    ctx: &AnalysisCtx,
    order: SolveOrder,
) -> Result<DataflowResult, SolveBudgetExceeded> {
    let n = cfg.nodes.len();
    let mut preds: Vec<Vec<NodeId>> = vec![Vec::new(); n];
    for (i, node) in cfg.nodes.iter().enumerate() {
        for &s in &node.succs {
            preds[s].push(i);
        }
    }

    let mut inputs: Vec<Pmap> = vec![Pmap::bottom(); n];
    let mut outputs: Vec<Option<Pmap>> = vec![None; n];
    let mut internal = Vec::new();

    // Budget: |nodes| * lattice height, with headroom. Height is bounded
    // by every variable gaining every entry plus domain growth.
    let vars = ctx.func.var_classes.len() + ctx.globals.len() + ctx.param_owners.len() + 2;
    let entries = vars * (MAX_LEVEL as usize + 1) + 3;
    let height = vars * (entries + 1) + vars;
    let budget = (n.max(1)) * (height + 16) * 4;

    let mut queue: VecDeque<NodeId> = VecDeque::new();
    let mut queued = vec![false; n];
    let mut rng = match order {
        SolveOrder::Random(seed) => Some(rand_chacha::ChaCha8Rng::seed_from_u64(seed)),
        _ => None,
    };
    queue.push_back(cfg.entry);
    queued[cfg.entry] = true;

    let mut pops = 0usize;
    while !queue.is_empty() {
        pops += 1;
        if pops > budget {
            return Err(SolveBudgetExceeded {
                function: ctx.func.name.clone(),
                budget,
            });
        }
        let node = match order {
            SolveOrder::Fifo => queue.pop_front().expect("queue is non-empty"),
            SolveOrder::Lifo => queue.pop_back().expect("queue is non-empty"),
            SolveOrder::Random(_) => {
                let rng = rng.as_mut().expect("random order has an rng");
                let contiguous = queue.make_contiguous();
                contiguous.shuffle(rng);
                queue.pop_front().expect("queue is non-empty")
            }
        };
        queued[node] = false;

        let mut input = if node == cfg.entry {
            seed.clone()
        } else {
            Pmap::bottom()
        };
        for &p in &preds[node] {
            if let Some(out) = &outputs[p] {
                input = join(&input, out);
            }
        }

        let out = transfer_with_diags(
            &cfg.nodes[node].instr,
            &input,
            &cfg.nodes[node].loc,
            ctx,
            &mut internal,
        );
        inputs[node] = input;
        let changed = match &outputs[node] {
            Some(old) => !old.same_state(&out),
            None => true,
        };
        if changed {
            outputs[node] = Some(out);
            for &s in &cfg.nodes[node].succs {
                if !queued[s] {
                    queued[s] = true;
                    queue.push_back(s);
                }
            }
        }
    }

    Ok(DataflowResult {
        inputs,
        outputs: outputs
            .into_iter()
            .map(|o| o.unwrap_or_default())
            .collect(),
        internal,
    })
}
