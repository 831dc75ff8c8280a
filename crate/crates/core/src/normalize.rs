//! Lowering to explicit-lifetime form and CFG construction.
//!
//! `lower_scopes` expands `let` declarations into create/destroy pairs
//! (deallocating Owners first), alpha-renames shadowed names, and makes
//! scope exits explicit at early returns. `desugar_heap` rewrites
//! `new`/`delete` into synthetic global-owner manipulation. `build_cfg`
//! flattens statements into single-instruction nodes with generated
//! temporaries.

use crate::ast::*;
use crate::cfg::{Cfg, ComputeOp, Instr, Node, NodeId, Operand};
use crate::loc::SourceLoc;
use crate::sema::SemaError;
use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::sync::Arc;

/// Signature of a callable function as the analysis sees it.
#[derive(Clone, Debug)]
pub struct SigInfo {
    pub params: Vec<(String, TypeClass, bool)>,
    pub return_class: Option<TypeClass>,
    pub annotations: Vec<Annotation>,
}

pub type SigTable = BTreeMap<String, SigInfo>;

pub fn signature_table(program: &Program) -> SigTable {
    program
        .functions
        .iter()
        .map(|f| {
            (
                f.name.clone(),
                SigInfo {
                    params: f
                        .params
                        .iter()
                        .map(|p| (p.name.clone(), p.class.class(), p.by_ref))
                        .collect(),
                    return_class: f.return_class.as_ref().map(|t| t.class()),
                    annotations: f.annotations.clone(),
                },
            )
        })
        .collect()
}

/// A normalized function: CFG plus the class of every name it mentions.
#[derive(Clone, Debug)]
pub struct NormFunction {
    pub name: String,
    pub params: Vec<(String, TypeClass, bool)>,
    pub return_class: Option<TypeClass>,
    pub annotations: Vec<Annotation>,
    pub cfg: Cfg,
    pub var_classes: BTreeMap<String, TypeClass>,
    /// Synthetic owners backing heap allocations; memory they own outlives
    /// the function.
    pub heap_owners: BTreeSet<String>,
    pub loc: SourceLoc,
}

#[derive(Clone, Debug)]
pub struct NormProgram {
    pub globals: BTreeMap<String, TypeClass>,
    pub functions: Vec<NormFunction>,
    pub sigs: SigTable,
    pub file: Arc<str>,
}

impl NormProgram {
    pub fn function(&self, name: &str) -> Option<&NormFunction> {
        self.functions.iter().find(|f| f.name == name)
    }
}

/// Collects every identifier appearing anywhere in the program, so that
/// synthesized names can be kept collision-free.
fn collect_idents(program: &Program) -> HashSet<String> {
    let mut names = HashSet::new();
    for g in &program.globals {
        names.insert(g.name.clone());
    }
    for f in &program.functions {
        names.insert(f.name.clone());
        for p in &f.params {
            names.insert(p.name.clone());
        }
        idents_block(&f.body, &mut names);
    }
    names
}

fn idents_block(block: &Block, names: &mut HashSet<String>) {
    for stmt in &block.stmts {
        match stmt {
            Stmt::Let { var, .. }
            | Stmt::Create { var, .. }
            | Stmt::Destroy { var, .. }
            | Stmt::Allocate { var, .. }
            | Stmt::New { var, .. }
            | Stmt::Lookup { var, .. }
            | Stmt::Assign { var, .. }
            | Stmt::CompoundAssign { var, .. } => {
                names.insert(var.clone());
            }
            Stmt::Move { dst, src, .. } => {
                names.insert(dst.clone());
                names.insert(src.clone());
            }
            Stmt::Call { result, .. } => {
                if let Some(r) = result {
                    names.insert(r.clone());
                }
            }
            Stmt::If {
                then_block,
                else_block,
                ..
            } => {
                idents_block(then_block, names);
                if let Some(e) = else_block {
                    idents_block(e, names);
                }
            }
            Stmt::While { body, .. } => idents_block(body, names),
            Stmt::Block(b) => idents_block(b, names),
            _ => {}
        }
    }
}

/// Produces `base` when free, otherwise `base%2`, `base%3`, ... The `%`
/// makes synthesized names unwritable in source programs.
struct NameSupply {
    used: HashSet<String>,
}

impl NameSupply {
    fn fresh(&mut self, base: &str) -> String {
        if self.used.insert(base.to_string()) {
            return base.to_string();
        }
        let mut n = 2;
        loop {
            let candidate = format!("{}%{}", base, n);
            if self.used.insert(candidate.clone()) {
                return candidate;
            }
            n += 1;
        }
    }
}

/// Strips the `%N` rename suffix for user-facing messages.
pub fn display_name(name: &str) -> &str {
    match name.split_once('%') {
        Some((base, _)) if !base.is_empty() => base,
        _ => name,
    }
}

// ---------------------------------------------------------------------
// lower_scopes

/// Expands `let` into explicit create/destroy. Destroys are emitted in
/// reverse declaration order at the end of the declaring block and before
/// every `return` that exits the scope; Owner variables are deallocated
/// before being destroyed. Explicit create/destroy pass through unchanged.
pub fn lower_scopes(program: &Program) -> Result<Program, SemaError> {
    let mut out = program.clone();
    let mut supply = NameSupply {
        used: collect_idents(program),
    };
    let globals: HashSet<String> = program.globals.iter().map(|g| g.name.clone()).collect();
    for f in &mut out.functions {
        let mut lowerer = ScopeLowerer {
            supply: &mut supply,
            frames: Vec::new(),
            ret_counter: 0,
            return_class: f.return_class.as_ref().map(|t| t.class()),
            file: out.file.clone(),
        };
        let mut root = Frame::default();
        for p in &f.params {
            root.declared.insert(p.name.clone());
        }
        for g in &globals {
            // Globals are shadowable but occupy the name.
            root.shadowable.insert(g.clone());
        }
        lowerer.frames.push(root);
        f.body = lowerer.lower_block(&f.body, true)?;
    }
    Ok(out)
}

#[derive(Default)]
struct Frame {
    /// Original name -> unique name for `let` declarations in this scope.
    renames: BTreeMap<String, String>,
    /// (unique name, class, declaration loc) in declaration order.
    lets: Vec<(String, TypeClass, SourceLoc)>,
    /// Names that cannot be re-declared by a `let` in this same scope.
    declared: HashSet<String>,
    /// Names that may be shadowed (globals).
    shadowable: HashSet<String>,
}

struct ScopeLowerer<'a> {
    supply: &'a mut NameSupply,
    frames: Vec<Frame>,
    ret_counter: usize,
    return_class: Option<TypeClass>,
    file: Arc<str>,
}

impl ScopeLowerer<'_> {
    fn resolve(&self, name: &str) -> String {
        for frame in self.frames.iter().rev() {
            if let Some(renamed) = frame.renames.get(name) {
                return renamed.clone();
            }
            if frame.declared.contains(name) {
                return name.to_string();
            }
        }
        name.to_string()
    }

    fn resolve_expr(&self, e: &Expr) -> Expr {
        let mut e = e.clone();
        self.rename_expr(&mut e);
        e
    }

    fn rename_expr(&self, e: &mut Expr) {
        match e {
            Expr::VarRef { name, .. }
            | Expr::AddressOf { var: name, .. }
            | Expr::MoveOf { var: name, .. }
            | Expr::IncDec { var: name, .. } => *name = self.resolve(name),
            Expr::Deref { inner, .. } => self.rename_expr(inner),
            Expr::BinOp { lhs, rhs, .. } => {
                self.rename_expr(lhs);
                self.rename_expr(rhs);
            }
            Expr::Index { base, index, .. } => {
                self.rename_expr(base);
                self.rename_expr(index);
            }
            Expr::Call { args, .. } => {
                for a in args {
                    self.rename_expr(a);
                }
            }
            Expr::IntLit { .. } | Expr::NullLit { .. } => {}
        }
    }

    /// Destroy statements for every pending `let` of every open scope,
    /// innermost first. Used at early returns.
    fn all_scope_exits(&self, loc: &SourceLoc) -> Vec<Stmt> {
        let mut out = Vec::new();
        for frame in self.frames.iter().rev() {
            push_destroys(&frame.lets, loc, &mut out);
        }
        out
    }

    fn lower_block(&mut self, block: &Block, is_root: bool) -> Result<Block, SemaError> {
        if !is_root {
            self.frames.push(Frame::default());
        }
        let mut stmts = Vec::new();
        for stmt in &block.stmts {
            self.lower_stmt(stmt, &mut stmts)?;
        }
        let frame = self.frames.last().expect("frame stack is never empty");
        push_destroys(&frame.lets, &block.end_loc, &mut stmts);
        self.frames.pop();
        if is_root {
            // Keep the frame stack balanced for reuse.
            self.frames.push(Frame::default());
        }
        Ok(Block {
            stmts,
            loc: block.loc.clone(),
            end_loc: block.end_loc.clone(),
        })
    }

    fn lower_stmt(&mut self, stmt: &Stmt, out: &mut Vec<Stmt>) -> Result<(), SemaError> {
        match stmt {
            Stmt::Let { var, class, loc } => {
                let frame = self.frames.last_mut().expect("frame stack is never empty");
                if frame.declared.contains(var) || frame.renames.contains_key(var) {
                    return Err(SemaError {
                        loc: loc.clone(),
                        message: format!("redeclaration of '{}' in the same scope", var),
                    });
                }
                let class = class.class();
                let needs_rename = self.resolve(var) != *var
                    || self
                        .frames
                        .iter()
                        .any(|f| f.shadowable.contains(var) || f.declared.contains(var));
                let unique = if needs_rename {
                    self.supply.fresh(&format!("{}%", var))
                } else {
                    var.clone()
                };
                let frame = self.frames.last_mut().expect("frame stack is never empty");
                frame.renames.insert(var.clone(), unique.clone());
                frame.lets.push((unique.clone(), class, loc.clone()));
                out.push(Stmt::Create {
                    var: unique,
                    class: TypeRef::Class(class),
                    loc: loc.clone(),
                });
            }
            Stmt::Create { var, class, loc } => {
                let frame = self.frames.last_mut().expect("frame stack is never empty");
                frame.declared.insert(var.clone());
                out.push(Stmt::Create {
                    var: self.resolve(var),
                    class: class.clone(),
                    loc: loc.clone(),
                });
            }
            Stmt::Destroy { var, loc } => {
                let resolved = self.resolve(var);
                // An explicit destroy of a `let` variable cancels its
                // automatic scope-end destroy.
                for frame in self.frames.iter_mut().rev() {
                    frame.lets.retain(|(name, _, _)| *name != resolved);
                }
                out.push(Stmt::Destroy {
                    var: resolved,
                    loc: loc.clone(),
                });
            }
            Stmt::Return { value, loc } => {
                let exits = self.all_scope_exits(loc);
                match value {
                    Some(e) if !exits.is_empty() => {
                        self.ret_counter += 1;
                        let ret = self.supply.fresh(&format!("%ret{}", self.ret_counter));
                        let class = self.return_class.unwrap_or(TypeClass::value());
                        out.push(Stmt::Create {
                            var: ret.clone(),
                            class: TypeRef::Class(class),
                            loc: loc.clone(),
                        });
                        out.push(Stmt::Assign {
                            var: ret.clone(),
                            value: self.resolve_expr(e),
                            loc: loc.clone(),
                        });
                        out.extend(exits);
                        out.push(Stmt::Return {
                            value: Some(Expr::VarRef {
                                name: ret,
                                loc: loc.clone(),
                            }),
                            loc: loc.clone(),
                        });
                    }
                    Some(e) => out.push(Stmt::Return {
                        value: Some(self.resolve_expr(e)),
                        loc: loc.clone(),
                    }),
                    None => {
                        out.extend(exits);
                        out.push(Stmt::Return {
                            value: None,
                            loc: loc.clone(),
                        });
                    }
                }
            }
            Stmt::If {
                cond,
                then_block,
                else_block,
                loc,
            } => {
                let cond = self.resolve_expr(cond);
                let then_block = self.lower_block(then_block, false)?;
                let else_block = match else_block {
                    Some(b) => Some(self.lower_block(b, false)?),
                    None => None,
                };
                out.push(Stmt::If {
                    cond,
                    then_block,
                    else_block,
                    loc: loc.clone(),
                });
            }
            Stmt::While { cond, body, loc } => {
                let cond = self.resolve_expr(cond);
                let body = self.lower_block(body, false)?;
                out.push(Stmt::While {
                    cond,
                    body,
                    loc: loc.clone(),
                });
            }
            Stmt::Block(b) => {
                let lowered = self.lower_block(b, false)?;
                out.push(Stmt::Block(lowered));
            }
            Stmt::Allocate { var, size, loc } => out.push(Stmt::Allocate {
                var: self.resolve(var),
                size: self.resolve_expr(size),
                loc: loc.clone(),
            }),
            Stmt::Deallocate { arg, loc } => out.push(Stmt::Deallocate {
                arg: self.resolve_expr(arg),
                loc: loc.clone(),
            }),
            Stmt::New { var, size, loc } => out.push(Stmt::New {
                var: self.resolve(var),
                size: self.resolve_expr(size),
                loc: loc.clone(),
            }),
            Stmt::Delete { arg, loc } => out.push(Stmt::Delete {
                arg: self.resolve_expr(arg),
                loc: loc.clone(),
            }),
            Stmt::Lookup { var, addr, loc } => out.push(Stmt::Lookup {
                var: self.resolve(var),
                addr: self.resolve_expr(addr),
                loc: loc.clone(),
            }),
            Stmt::Mutation { addr, value, loc } => out.push(Stmt::Mutation {
                addr: self.resolve_expr(addr),
                value: self.resolve_expr(value),
                loc: loc.clone(),
            }),
            Stmt::Assign { var, value, loc } => out.push(Stmt::Assign {
                var: self.resolve(var),
                value: self.resolve_expr(value),
                loc: loc.clone(),
            }),
            Stmt::Move { dst, src, loc } => out.push(Stmt::Move {
                dst: self.resolve(dst),
                src: self.resolve(src),
                loc: loc.clone(),
            }),
            Stmt::CompoundAssign {
                var,
                op,
                value,
                loc,
            } => out.push(Stmt::CompoundAssign {
                var: self.resolve(var),
                op: *op,
                value: self.resolve_expr(value),
                loc: loc.clone(),
            }),
            Stmt::Call {
                result,
                callee,
                args,
                loc,
            } => out.push(Stmt::Call {
                result: result.as_ref().map(|r| self.resolve(r)),
                callee: callee.clone(),
                args: args.iter().map(|a| self.resolve_expr(a)).collect(),
                loc: loc.clone(),
            }),
            Stmt::ExprStmt { expr, loc } => out.push(Stmt::ExprStmt {
                expr: self.resolve_expr(expr),
                loc: loc.clone(),
            }),
        }
        let _ = &self.file;
        Ok(())
    }
}

fn push_destroys(lets: &[(String, TypeClass, SourceLoc)], loc: &SourceLoc, out: &mut Vec<Stmt>) {
    for (name, class, _) in lets.iter().rev() {
        if class.kind == TypeKind::Owner {
            out.push(Stmt::Deallocate {
                arg: Expr::VarRef {
                    name: name.clone(),
                    loc: loc.clone(),
                },
                loc: loc.clone(),
            });
        }
        out.push(Stmt::Destroy {
            var: name.clone(),
            loc: loc.clone(),
        });
    }
}

// ---------------------------------------------------------------------
// desugar_heap

/// Rewrites `p = new(n)` into creation of a fresh synthetic global Owner
/// plus an allocation, and `delete e` into a deallocation through `e`.
pub fn desugar_heap(program: &Program) -> Program {
    desugar_heap_full(program).0
}

/// Like [`desugar_heap`] but also reports the synthetic owner names
/// introduced per function.
pub fn desugar_heap_full(program: &Program) -> (Program, BTreeMap<String, BTreeSet<String>>) {
    let mut out = program.clone();
    let mut supply = NameSupply {
        used: collect_idents(program),
    };
    let mut owners_per_fn = BTreeMap::new();
    let mut counter = 0usize;
    for f in &mut out.functions {
        let mut owners = BTreeSet::new();
        desugar_block(&mut f.body, &mut supply, &mut counter, &mut owners);
        owners_per_fn.insert(f.name.clone(), owners);
    }
    (out, owners_per_fn)
}

fn desugar_block(
    block: &mut Block,
    supply: &mut NameSupply,
    counter: &mut usize,
    owners: &mut BTreeSet<String>,
) {
    let mut stmts = Vec::with_capacity(block.stmts.len());
    for stmt in block.stmts.drain(..) {
        match stmt {
            Stmt::New { var, size, loc } => {
                *counter += 1;
                let owner = supply.fresh(&format!("g_{}", counter));
                owners.insert(owner.clone());
                stmts.push(Stmt::Create {
                    var: owner.clone(),
                    class: TypeRef::Class(TypeClass::owner()),
                    loc: loc.clone(),
                });
                stmts.push(Stmt::Allocate {
                    var: owner.clone(),
                    size,
                    loc: loc.clone(),
                });
                stmts.push(Stmt::Assign {
                    var,
                    value: Expr::VarRef {
                        name: owner,
                        loc: loc.clone(),
                    },
                    loc,
                });
            }
            Stmt::Delete { arg, loc } => {
                stmts.push(Stmt::Deallocate { arg, loc });
            }
            mut other => {
                match &mut other {
                    Stmt::If {
                        then_block,
                        else_block,
                        ..
                    } => {
                        desugar_block(then_block, supply, counter, owners);
                        if let Some(e) = else_block {
                            desugar_block(e, supply, counter, owners);
                        }
                    }
                    Stmt::While { body, .. } => desugar_block(body, supply, counter, owners),
                    Stmt::Block(b) => desugar_block(b, supply, counter, owners),
                    _ => {}
                }
                stmts.push(other);
            }
        }
    }
    block.stmts = stmts;
}

// ---------------------------------------------------------------------
// build_cfg

/// Flattens one lowered, desugared function into a CFG of
/// single-instruction nodes.
pub fn build_cfg(func: &Function, sigs: &SigTable) -> (Cfg, BTreeMap<String, TypeClass>, BTreeSet<String>) {
    let mut classes = BTreeMap::new();
    for p in &func.params {
        classes.insert(p.name.clone(), p.class.class());
    }
    collect_create_classes(&func.body, &mut classes);

    let mut builder = CfgBuilder {
        nodes: Vec::new(),
        cursor: None,
        classes,
        temp_counter: 0,
        alloc_counter: 0,
        alloc_sites: BTreeSet::new(),
        sigs,
        used: {
            let mut names = HashSet::new();
            idents_block(&func.body, &mut names);
            for p in &func.params {
                names.insert(p.name.clone());
            }
            names
        },
    };

    let entry = builder.push_node(Instr::Nop { cond: None }, func.loc.clone());
    builder.cursor = Some(entry);
    builder.build_block(&func.body);
    if builder.cursor.is_some() {
        builder.append(Instr::Return { value: None }, func.body.end_loc.clone());
    }

    let (cfg, classes, alloc_sites) = builder.finish(entry);
    (cfg, classes, alloc_sites)
}

fn collect_create_classes(block: &Block, classes: &mut BTreeMap<String, TypeClass>) {
    for stmt in &block.stmts {
        match stmt {
            Stmt::Create { var, class, .. } | Stmt::Let { var, class, .. } => {
                classes.insert(var.clone(), class.class());
            }
            Stmt::If {
                then_block,
                else_block,
                ..
            } => {
                collect_create_classes(then_block, classes);
                if let Some(e) = else_block {
                    collect_create_classes(e, classes);
                }
            }
            Stmt::While { body, .. } => collect_create_classes(body, classes),
            Stmt::Block(b) => collect_create_classes(b, classes),
            _ => {}
        }
    }
}

struct CfgBuilder<'a> {
    nodes: Vec<Node>,
    cursor: Option<NodeId>,
    classes: BTreeMap<String, TypeClass>,
    temp_counter: usize,
    alloc_counter: usize,
    alloc_sites: BTreeSet<String>,
    sigs: &'a SigTable,
    used: HashSet<String>,
}

impl CfgBuilder<'_> {
    fn push_node(&mut self, instr: Instr, loc: SourceLoc) -> NodeId {
        self.nodes.push(Node {
            instr,
            loc,
            succs: Vec::new(),
        });
        self.nodes.len() - 1
    }

    /// Appends a node after the cursor and moves the cursor to it.
    fn append(&mut self, instr: Instr, loc: SourceLoc) -> NodeId {
        let id = self.push_node(instr, loc);
        if let Some(prev) = self.cursor {
            self.nodes[prev].succs.push(id);
        }
        self.cursor = Some(id);
        id
    }

    fn fresh_temp(&mut self, class: TypeClass) -> String {
        loop {
            self.temp_counter += 1;
            let name = format!("%t{}", self.temp_counter);
            if self.used.insert(name.clone()) {
                self.classes.insert(name.clone(), class);
                return name;
            }
        }
    }

    fn fresh_alloc_site(&mut self) -> String {
        loop {
            self.alloc_counter += 1;
            let name = format!("alloc_{}", self.alloc_counter);
            if self.used.insert(name.clone()) {
                self.alloc_sites.insert(name.clone());
                self.classes.insert(name.clone(), TypeClass::owner());
                return name;
            }
        }
    }

    fn class_of(&self, name: &str) -> Option<TypeClass> {
        self.classes.get(name).copied()
    }

    fn is_owner(&self, name: &str) -> bool {
        self.class_of(name).map(|c| c.kind) == Some(TypeKind::Owner)
    }

    /// Reassigning an Owner is a non-const use of it: pointers into its
    /// old allocation must not survive.
    fn owner_use_if_needed(&mut self, dst: &str, loc: &SourceLoc) {
        if self.is_owner(dst) {
            self.append(
                Instr::OwnerUse {
                    owner: dst.to_string(),
                    is_const: false,
                },
                loc.clone(),
            );
        }
    }

    fn build_block(&mut self, block: &Block) {
        for stmt in &block.stmts {
            self.build_stmt(stmt);
        }
    }

    fn build_stmt(&mut self, stmt: &Stmt) {
        match stmt {
            Stmt::Let { var, class, loc } | Stmt::Create { var, class, loc } => {
                self.append(
                    Instr::Create {
                        var: var.clone(),
                        class: class.class(),
                    },
                    loc.clone(),
                );
            }
            Stmt::Destroy { var, loc } => {
                self.append(Instr::Destroy { var: var.clone() }, loc.clone());
            }
            Stmt::Allocate { var, size, loc } => {
                let size = self.flatten_operand(size);
                self.owner_use_if_needed(var, loc);
                let site = self.fresh_alloc_site();
                self.append(
                    Instr::AllocAssign {
                        dst: var.clone(),
                        size,
                        site,
                    },
                    loc.clone(),
                );
            }
            Stmt::Deallocate { arg, loc } => {
                let ptr = self.flatten_to_var(arg);
                self.append(Instr::Dealloc { ptr }, loc.clone());
            }
            Stmt::New { .. } | Stmt::Delete { .. } => {
                unreachable!("desugar_heap runs before build_cfg")
            }
            Stmt::Lookup { var, addr, loc } => {
                let ptr = self.flatten_to_var(addr);
                self.owner_use_if_needed(var, loc);
                self.append(
                    Instr::DerefRead {
                        dst: var.clone(),
                        ptr,
                    },
                    loc.clone(),
                );
            }
            Stmt::Mutation { addr, value, loc } => {
                let ptr = self.flatten_to_var(addr);
                let src = self.flatten_operand(value);
                self.append(Instr::DerefWrite { ptr, src }, loc.clone());
            }
            Stmt::Assign { var, value, loc } => self.build_assign(var, value, loc),
            Stmt::Move { dst, src, loc } => {
                self.owner_use_if_needed(dst, loc);
                self.append(
                    Instr::MoveAssign {
                        dst: dst.clone(),
                        src: src.clone(),
                    },
                    loc.clone(),
                );
            }
            Stmt::CompoundAssign {
                var,
                op,
                value,
                loc,
            } => {
                let rhs = self.flatten_operand(value);
                self.append(
                    Instr::Compute {
                        dst: var.clone(),
                        op: bin_to_compute(*op),
                        lhs: Operand::Var(var.clone()),
                        rhs,
                    },
                    loc.clone(),
                );
            }
            Stmt::If {
                cond,
                then_block,
                else_block,
                loc,
            } => {
                let cond_op = self.flatten_operand(cond);
                let branch = self.append(Instr::Nop { cond: Some(cond_op) }, loc.clone());
                let join = self.push_node(Instr::Nop { cond: None }, loc.clone());

                // True edge: linking the then-arm (or the join directly when
                // the arm is empty) claims successor slot 0.
                self.cursor = Some(branch);
                self.build_block(then_block);
                if let Some(t) = self.cursor {
                    self.nodes[t].succs.push(join);
                }

                // False edge: slot 1.
                self.cursor = Some(branch);
                if let Some(els) = else_block {
                    self.build_block(els);
                }
                if let Some(t) = self.cursor {
                    self.nodes[t].succs.push(join);
                }
                self.cursor = Some(join);
            }
            Stmt::While { cond, body, loc } => {
                // Condition instructions sit inside the loop so they
                // re-execute on the back edge.
                let head_anchor = self.append(Instr::Nop { cond: None }, loc.clone());
                let cond_op = self.flatten_operand(cond);
                let branch = self.append(Instr::Nop { cond: Some(cond_op) }, loc.clone());

                self.cursor = Some(branch);
                self.build_block(body);
                if let Some(tail) = self.cursor {
                    self.nodes[tail].succs.push(head_anchor);
                }

                let exit = self.push_node(Instr::Nop { cond: None }, loc.clone());
                self.nodes[branch].succs.push(exit);
                self.cursor = Some(exit);
            }
            Stmt::Call {
                result,
                callee,
                args,
                loc,
            } => {
                let arg_vars = self.flatten_args(callee, args);
                if let Some(r) = result {
                    self.owner_use_if_needed(r, loc);
                }
                self.append(
                    Instr::Call {
                        result: result.clone(),
                        callee: callee.clone(),
                        args: arg_vars,
                    },
                    loc.clone(),
                );
            }
            Stmt::Return { value, loc } => {
                let value = value.as_ref().map(|e| self.flatten_to_var(e));
                self.append(Instr::Return { value }, loc.clone());
                self.cursor = None;
            }
            Stmt::Block(b) => self.build_block(b),
            Stmt::ExprStmt { expr, loc } => {
                // Evaluated for side effects only.
                let _ = self.flatten_operand(expr);
                let _ = loc;
            }
        }
    }

    fn build_assign(&mut self, var: &str, value: &Expr, loc: &SourceLoc) {
        match value {
            Expr::AddressOf { var: target, .. } => {
                self.owner_use_if_needed(var, loc);
                self.append(
                    Instr::TakeAddress {
                        dst: var.to_string(),
                        var: target.clone(),
                    },
                    loc.clone(),
                );
            }
            Expr::Deref { inner, .. } => {
                let ptr = self.flatten_to_var(inner);
                self.owner_use_if_needed(var, loc);
                self.append(
                    Instr::DerefRead {
                        dst: var.to_string(),
                        ptr,
                    },
                    loc.clone(),
                );
            }
            Expr::MoveOf { var: src, .. } => {
                self.owner_use_if_needed(var, loc);
                self.append(
                    Instr::MoveAssign {
                        dst: var.to_string(),
                        src: src.clone(),
                    },
                    loc.clone(),
                );
            }
            Expr::VarRef { name, .. } => {
                self.owner_use_if_needed(var, loc);
                self.append(
                    Instr::Copy {
                        dst: var.to_string(),
                        src: Operand::Var(name.clone()),
                    },
                    loc.clone(),
                );
            }
            Expr::IntLit { value: v, .. } => {
                self.owner_use_if_needed(var, loc);
                self.append(
                    Instr::Copy {
                        dst: var.to_string(),
                        src: Operand::Const(*v),
                    },
                    loc.clone(),
                );
            }
            Expr::NullLit { .. } => {
                self.owner_use_if_needed(var, loc);
                self.append(
                    Instr::Copy {
                        dst: var.to_string(),
                        src: Operand::Null,
                    },
                    loc.clone(),
                );
            }
            Expr::Call { callee, args, .. } => {
                let arg_vars = self.flatten_args(callee, args);
                self.owner_use_if_needed(var, loc);
                self.append(
                    Instr::Call {
                        result: Some(var.to_string()),
                        callee: callee.clone(),
                        args: arg_vars,
                    },
                    loc.clone(),
                );
            }
            Expr::BinOp { op, lhs, rhs, .. } => {
                let l = self.flatten_operand(lhs);
                let r = self.flatten_operand(rhs);
                self.append(
                    Instr::Compute {
                        dst: var.to_string(),
                        op: bin_to_compute(*op),
                        lhs: l,
                        rhs: r,
                    },
                    loc.clone(),
                );
            }
            Expr::Index { base, index, .. } => {
                let b = self.flatten_operand(base);
                let i = self.flatten_operand(index);
                self.append(
                    Instr::Compute {
                        dst: var.to_string(),
                        op: ComputeOp::Index,
                        lhs: b,
                        rhs: i,
                    },
                    loc.clone(),
                );
            }
            Expr::IncDec { .. } => {
                let op = self.flatten_operand(value);
                self.owner_use_if_needed(var, loc);
                self.append(
                    Instr::Copy {
                        dst: var.to_string(),
                        src: op,
                    },
                    loc.clone(),
                );
            }
        }
    }

    /// Call arguments must be plain identifiers; literals and compound
    /// expressions go through temporaries.
    fn flatten_args(&mut self, callee: &str, args: &[Expr]) -> Vec<String> {
        let sig = self.sigs.get(callee).cloned();
        args.iter()
            .enumerate()
            .map(|(i, a)| match a {
                Expr::VarRef { name, .. } => name.clone(),
                _ => {
                    let class = sig
                        .as_ref()
                        .and_then(|s| s.params.get(i))
                        .map(|(_, c, _)| *c)
                        .unwrap_or_else(|| self.expr_class(a));
                    let tmp = self.fresh_temp(class);
                    self.flatten_into(&tmp, a);
                    tmp
                }
            })
            .collect()
    }

    /// Best-effort class of a flattened expression, for temporaries.
    fn expr_class(&self, e: &Expr) -> TypeClass {
        match e {
            Expr::VarRef { name, .. } => self.class_of(name).unwrap_or(TypeClass::value()),
            Expr::AddressOf { .. } => TypeClass::pointer(),
            Expr::Deref { .. } => TypeClass::pointer(),
            Expr::MoveOf { var, .. } => self.class_of(var).unwrap_or(TypeClass::value()),
            Expr::NullLit { .. } => TypeClass::pointer(),
            Expr::Call { callee, .. } => self
                .sigs
                .get(callee)
                .and_then(|s| s.return_class)
                .unwrap_or(TypeClass::pointer()),
            _ => TypeClass::value(),
        }
    }

    /// Flattens an expression to an operand, emitting instructions for
    /// any compound parts.
    fn flatten_operand(&mut self, e: &Expr) -> Operand {
        match e {
            Expr::VarRef { name, .. } => Operand::Var(name.clone()),
            Expr::IntLit { value, .. } => Operand::Const(*value),
            Expr::NullLit { .. } => Operand::Null,
            Expr::IncDec {
                op, prefix, var, loc,
            } => {
                let compute_op = match op {
                    IncDecOp::Inc => ComputeOp::Add,
                    IncDecOp::Dec => ComputeOp::Sub,
                };
                if *prefix {
                    self.append(
                        Instr::Compute {
                            dst: var.clone(),
                            op: compute_op,
                            lhs: Operand::Var(var.clone()),
                            rhs: Operand::Const(1),
                        },
                        loc.clone(),
                    );
                    Operand::Var(var.clone())
                } else {
                    let class = self.class_of(var).unwrap_or(TypeClass::value());
                    let old = self.fresh_temp(class);
                    self.append(
                        Instr::Copy {
                            dst: old.clone(),
                            src: Operand::Var(var.clone()),
                        },
                        loc.clone(),
                    );
                    self.append(
                        Instr::Compute {
                            dst: var.clone(),
                            op: compute_op,
                            lhs: Operand::Var(var.clone()),
                            rhs: Operand::Const(1),
                        },
                        loc.clone(),
                    );
                    Operand::Var(old)
                }
            }
            _ => {
                let class = self.expr_class(e);
                let tmp = self.fresh_temp(class);
                self.flatten_into(&tmp, e);
                Operand::Var(tmp)
            }
        }
    }

    /// Flattens an expression into a named destination.
    fn flatten_into(&mut self, dst: &str, e: &Expr) {
        match e {
            Expr::VarRef { loc, .. }
            | Expr::IntLit { loc, .. }
            | Expr::NullLit { loc }
            | Expr::IncDec { loc, .. } => {
                let op = self.flatten_operand(e);
                self.append(
                    Instr::Copy {
                        dst: dst.to_string(),
                        src: op,
                    },
                    loc.clone(),
                );
            }
            _ => self.build_assign(dst, e, e.loc()),
        }
    }

    /// Flattens an expression to a variable name (for deref bases, call
    /// arguments of deallocate, and return values).
    fn flatten_to_var(&mut self, e: &Expr) -> String {
        match e {
            Expr::VarRef { name, .. } => name.clone(),
            _ => {
                let class = self.expr_class(e);
                let tmp = self.fresh_temp(class);
                self.flatten_into(&tmp, e);
                tmp
            }
        }
    }

    /// Prunes unreachable nodes and computes exits.
    fn finish(self, entry: NodeId) -> (Cfg, BTreeMap<String, TypeClass>, BTreeSet<String>) {
        let mut reachable = vec![false; self.nodes.len()];
        let mut stack = vec![entry];
        reachable[entry] = true;
        while let Some(n) = stack.pop() {
            for &s in &self.nodes[n].succs {
                if !reachable[s] {
                    reachable[s] = true;
                    stack.push(s);
                }
            }
        }
        let mut remap = vec![usize::MAX; self.nodes.len()];
        let mut nodes = Vec::new();
        for (i, node) in self.nodes.into_iter().enumerate() {
            if reachable[i] {
                remap[i] = nodes.len();
                nodes.push(node);
            }
        }
        for node in &mut nodes {
            node.succs = node
                .succs
                .iter()
                .filter(|s| remap[**s] != usize::MAX)
                .map(|s| remap[*s])
                .collect();
        }
        let mut exits = BTreeSet::new();
        for (i, node) in nodes.iter().enumerate() {
            if node.succs.is_empty() {
                exits.insert(i);
            }
        }
        (
            Cfg {
                nodes,
                entry: remap[entry],
                exits,
            },
            self.classes,
            self.alloc_sites,
        )
    }
}

fn bin_to_compute(op: BinOpKind) -> ComputeOp {
    match op {
        BinOpKind::Add => ComputeOp::Add,
        BinOpKind::Sub => ComputeOp::Sub,
        BinOpKind::Mul => ComputeOp::Mul,
        BinOpKind::Div => ComputeOp::Div,
        BinOpKind::Eq => ComputeOp::Eq,
        BinOpKind::Ne => ComputeOp::Ne,
        BinOpKind::Lt => ComputeOp::Lt,
        BinOpKind::Le => ComputeOp::Le,
        BinOpKind::Gt => ComputeOp::Gt,
        BinOpKind::Ge => ComputeOp::Ge,
    }
}

// ---------------------------------------------------------------------
// normalize_program

/// Full frontend-to-CFG pipeline for an already type-resolved program:
/// scope lowering, heap desugaring, then per-function CFG construction.
pub fn normalize_program(program: &Program) -> Result<NormProgram, SemaError> {
    let lowered = lower_scopes(program)?;
    let (desugared, heap_owner_map) = desugar_heap_full(&lowered);
    crate::sema::check_scopes(&desugared)?;
    let sigs = signature_table(&desugared);
    let globals: BTreeMap<String, TypeClass> = desugared
        .globals
        .iter()
        .map(|g| (g.name.clone(), g.class.class()))
        .collect();
    let mut functions = Vec::new();
    for f in &desugared.functions {
        let (cfg, var_classes, alloc_sites) = build_cfg(f, &sigs);
        let mut heap_owners = heap_owner_map.get(&f.name).cloned().unwrap_or_default();
        heap_owners.extend(alloc_sites);
        functions.push(NormFunction {
            name: f.name.clone(),
            params: f
                .params
                .iter()
                .map(|p| (p.name.clone(), p.class.class(), p.by_ref))
                .collect(),
            return_class: f.return_class.as_ref().map(|t| t.class()),
            annotations: f.annotations.clone(),
            cfg,
            var_classes,
            heap_owners,
            loc: f.loc.clone(),
        });
    }
    Ok(NormProgram {
        globals,
        functions,
        sigs,
        file: desugared.file.clone(),
    })
}
