//! Deterministic random program generator for oracle-equivalence fuzzing.
//!
//! Generation is type-directed: every statement template draws only from
//! operands whose classes are available in scope, so emitted programs
//! always parse and scope-check. In error-seeding mode a known
//! use-after-free pattern is planted so the corpus carries positives as
//! well as negatives.

use crate::ast::Program;
use crate::cfg::InstrKind;
use crate::diag::Code;
use crate::interp::{enumerate_paths, PathBounds};
use crate::parser::parse_program;
use crate::pipeline::{analyze_program, AnalyzeOptions};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;
use std::fmt::Write as _;

#[derive(Clone, Copy, Debug)]
pub struct FeatureMask {
    pub moves: bool,
    pub heap: bool,
    pub calls: bool,
    pub loops: bool,
}

impl Default for FeatureMask {
    fn default() -> Self {
        FeatureMask {
            moves: true,
            heap: true,
            calls: true,
            loops: true,
        }
    }
}

impl FeatureMask {
    /// Parses a comma-separated list like `moves,heap`; empty enables all.
    pub fn parse(spec: &str) -> Result<FeatureMask, String> {
        if spec.trim().is_empty() {
            return Ok(FeatureMask::default());
        }
        let mut mask = FeatureMask {
            moves: false,
            heap: false,
            calls: false,
            loops: false,
        };
        for part in spec.split(',') {
            match part.trim() {
                "moves" => mask.moves = true,
                "heap" => mask.heap = true,
                "calls" => mask.calls = true,
                "loops" => mask.loops = true,
                other => return Err(format!("unknown feature '{}'", other)),
            }
        }
        Ok(mask)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct GenConfig {
    pub seed: u64,
    pub max_statements: usize,
    pub max_depth: usize,
    pub features: FeatureMask,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            seed: 0,
            max_statements: 12,
            max_depth: 2,
            features: FeatureMask::default(),
        }
    }
}

impl GenConfig {
    pub fn with_seed(seed: u64) -> Self {
        GenConfig {
            seed,
            ..GenConfig::default()
        }
    }
}

/// Generates the source text of a well-formed program.
pub fn generate_source(config: &GenConfig) -> String {
    let mut gen = Generator::new(config);
    gen.program()
}

/// Generates and parses a program. Parse failure would be a generator
/// bug, not an input condition.
pub fn generate(config: &GenConfig) -> Program {
    let source = generate_source(config);
    parse_program(&source, "<generated>")
        .unwrap_or_else(|e| panic!("generated program failed to parse: {}\n{}", e, source))
}

#[derive(Clone)]
struct PtrInfo {
    name: String,
    /// Dereferencing cannot fault on any path.
    deref_safe: bool,
    /// Owner whose block this pointer refers into, if any.
    root_owner: Option<String>,
    /// Heap allocation id for new/delete pairing.
    heap_root: Option<usize>,
}

#[derive(Clone)]
struct OwnerInfo {
    name: String,
    /// Not moved from.
    valid: bool,
}

#[derive(Clone, Default)]
struct Scope {
    values: Vec<String>,
    uninit_values: Vec<String>,
    pointers: Vec<PtrInfo>,
    owners: Vec<OwnerInfo>,
}

struct Helper {
    name: String,
    /// (class keyword, by_ref)
    params: Vec<(&'static str, bool)>,
    returns_pointer: bool,
}

struct Generator {
    rng: ChaCha8Rng,
    out: String,
    indent: usize,
    scopes: Vec<Scope>,
    counter: usize,
    helpers: Vec<Helper>,
    features: FeatureMask,
    max_statements: usize,
    max_depth: usize,
    /// Numbers new/delete pairs.
    heap_counter: usize,
    deleted_heap_roots: Vec<usize>,
    nondet_branches: usize,
    nondet_loops: usize,
}

impl Generator {
    fn new(config: &GenConfig) -> Generator {
        Generator {
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            out: String::new(),
            indent: 0,
            scopes: Vec::new(),
            counter: 0,
            helpers: Vec::new(),
            features: config.features,
            max_statements: config.max_statements,
            max_depth: config.max_depth,
            heap_counter: 0,
            deleted_heap_roots: Vec::new(),
            nondet_branches: 0,
            nondet_loops: 0,
        }
    }

    fn line(&mut self, text: &str) {
        for _ in 0..self.indent {
            self.out.push_str("    ");
        }
        self.out.push_str(text);
        self.out.push('\n');
    }

    fn fresh(&mut self, prefix: &str) -> String {
        self.counter += 1;
        format!("{}{}", prefix, self.counter)
    }

    // ---- scope bookkeeping ------------------------------------------

    fn scope(&mut self) -> &mut Scope {
        self.scopes.last_mut().expect("scope stack is never empty")
    }

    fn all_values(&self) -> Vec<String> {
        self.scopes
            .iter()
            .flat_map(|s| s.values.iter().cloned())
            .collect()
    }

    fn all_uninit(&self) -> Vec<String> {
        self.scopes
            .iter()
            .flat_map(|s| s.uninit_values.iter().cloned())
            .collect()
    }

    fn safe_pointers(&self) -> Vec<String> {
        self.scopes
            .iter()
            .flat_map(|s| s.pointers.iter())
            .filter(|p| p.deref_safe)
            .map(|p| p.name.clone())
            .collect()
    }

    fn all_pointers(&self) -> Vec<String> {
        self.scopes
            .iter()
            .flat_map(|s| s.pointers.iter().map(|p| p.name.clone()))
            .collect()
    }

    fn valid_owners(&self) -> Vec<String> {
        self.scopes
            .iter()
            .flat_map(|s| s.owners.iter())
            .filter(|o| o.valid)
            .map(|o| o.name.clone())
            .collect()
    }

    fn pointer_mut(&mut self, name: &str) -> Option<&mut PtrInfo> {
        self.scopes
            .iter_mut()
            .flat_map(|s| s.pointers.iter_mut())
            .find(|p| p.name == name)
    }

    fn owner_mut(&mut self, name: &str) -> Option<&mut OwnerInfo> {
        self.scopes
            .iter_mut()
            .flat_map(|s| s.owners.iter_mut())
            .find(|o| o.name == name)
    }

    /// Pointers rooted in `owner` dangle once the owner reallocates, is
    /// moved from, or leaves.
    fn invalidate_owner_pointers(&mut self, owner: &str) {
        for scope in &mut self.scopes {
            for p in &mut scope.pointers {
                if p.root_owner.as_deref() == Some(owner) {
                    p.deref_safe = false;
                }
            }
        }
    }

    fn invalidate_heap_pointers(&mut self, root: usize) {
        for scope in &mut self.scopes {
            for p in &mut scope.pointers {
                if p.heap_root == Some(root) {
                    p.deref_safe = false;
                }
            }
        }
    }

    // ---- declarations -----------------------------------------------

    fn decl_value(&mut self, init: bool) -> String {
        let name = self.fresh("v");
        self.line(&format!("let {}: Value;", name));
        if init {
            let lit = self.rng.gen_range(0..10);
            self.line(&format!("{} = {};", name, lit));
            self.scope().values.push(name.clone());
        } else {
            self.scope().uninit_values.push(name.clone());
        }
        name
    }

    fn decl_owner(&mut self) -> String {
        let name = self.fresh("o");
        self.line(&format!("let {}: Owner;", name));
        self.scope().owners.push(OwnerInfo {
            name: name.clone(),
            valid: true,
        });
        name
    }

    fn decl_pointer(&mut self) -> String {
        let name = self.fresh("p");
        self.line(&format!("let {}: Pointer;", name));
        self.scope().pointers.push(PtrInfo {
            name: name.clone(),
            deref_safe: false,
            root_owner: None,
            heap_root: None,
        });
        name
    }

    // ---- statement templates -------------------------------------------

    fn stmt_value_arith(&mut self) {
        let values = self.all_values();
        if values.is_empty() {
            self.decl_value(true);
            return;
        }
        let dst = values.choose(&mut self.rng).cloned().expect("non-empty");
        let src = values.choose(&mut self.rng).cloned().expect("non-empty");
        let lit = self.rng.gen_range(0..10);
        let op = ["+", "-", "*"].choose(&mut self.rng).copied().expect("non-empty");
        match self.rng.gen_range(0..3) {
            0 => self.line(&format!("{} = {} {} {};", dst, src, op, lit)),
            1 => self.line(&format!("{} = {} {} {};", dst, src, op, src)),
            _ => self.line(&format!("{}++;", dst)),
        }
    }

    /// Points an existing or fresh pointer at an in-scope root from the
    /// outermost scopes, keeping it deref-safe.
    fn stmt_point_at(&mut self, allow_fresh: bool) {
        let values = self.all_values();
        let owners = self.valid_owners();
        let safe = self.safe_pointers();
        let ptr = if allow_fresh && (self.all_pointers().is_empty() || self.rng.gen_bool(0.5)) {
            self.decl_pointer()
        } else {
            match self.all_pointers().choose(&mut self.rng).cloned() {
                Some(p) => p,
                None => self.decl_pointer(),
            }
        };
        enum Target {
            Value(String),
            Owner(String),
            Alias(String),
        }
        let mut options = Vec::new();
        if let Some(v) = values.choose(&mut self.rng) {
            options.push(Target::Value(v.clone()));
        }
        if let Some(o) = owners.choose(&mut self.rng) {
            options.push(Target::Owner(o.clone()));
        }
        if let Some(q) = safe.iter().filter(|q| **q != ptr).choose(&mut self.rng) {
            options.push(Target::Alias(q.clone()));
        }
        if options.is_empty() {
            let v = self.decl_value(true);
            options.push(Target::Value(v));
        }
        let target = options.choose(&mut self.rng).expect("non-empty");
        match target {
            Target::Value(v) => {
                self.line(&format!("{} = &{};", ptr, v));
                let info = self.pointer_mut(&ptr).expect("pointer exists");
                info.deref_safe = true;
                info.root_owner = None;
                info.heap_root = None;
            }
            Target::Owner(o) => {
                let o = o.clone();
                self.line(&format!("{} = {};", ptr, o));
                let info = self.pointer_mut(&ptr).expect("pointer exists");
                info.deref_safe = true;
                info.root_owner = Some(o);
                info.heap_root = None;
            }
            Target::Alias(q) => {
                let q = q.clone();
                self.line(&format!("{} = {};", ptr, q));
                let src = self
                    .pointer_mut(&q)
                    .map(|p| (p.deref_safe, p.root_owner.clone(), p.heap_root))
                    .expect("alias source exists");
                let info = self.pointer_mut(&ptr).expect("pointer exists");
                info.deref_safe = src.0;
                info.root_owner = src.1;
                info.heap_root = src.2;
            }
        }
    }

    fn stmt_deref(&mut self) {
        let safe = self.safe_pointers();
        let ptr = match safe.choose(&mut self.rng) {
            Some(p) => p.clone(),
            None => {
                self.stmt_point_at(true);
                return;
            }
        };
        if self.rng.gen_bool(0.5) {
            let lit = self.rng.gen_range(0..10);
            self.line(&format!("[{}] = {};", ptr, lit));
        } else {
            let values = self.all_values();
            match values.choose(&mut self.rng) {
                Some(v) => {
                    let v = v.clone();
                    self.line(&format!("{} = [{}];", v, ptr));
                }
                None => {
                    let v = self.decl_value(true);
                    self.line(&format!("{} = [{}];", v, ptr));
                }
            }
        }
    }

    fn stmt_owner_realloc(&mut self) {
        let owners = self.valid_owners();
        let owner = match owners.choose(&mut self.rng) {
            Some(o) => o.clone(),
            None => self.decl_owner(),
        };
        let size = self.rng.gen_range(1..4);
        self.line(&format!("{} = allocate({});", owner, size));
        self.invalidate_owner_pointers(&owner);
    }

    fn stmt_heap_pair(&mut self) {
        let size = self.rng.gen_range(1..4);
        let ptr = self.decl_pointer();
        self.heap_counter += 1;
        let root = self.heap_counter;
        self.line(&format!("{} = new({});", ptr, size));
        let info = self.pointer_mut(&ptr).expect("pointer exists");
        info.deref_safe = true;
        info.heap_root = Some(root);
        if self.rng.gen_bool(0.5) {
            self.stmt_deref_specific(&ptr);
        }
        self.line(&format!("delete {};", ptr));
        self.invalidate_heap_pointers(root);
        self.deleted_heap_roots.push(root);
    }

    fn stmt_deref_specific(&mut self, ptr: &str) {
        let lit = self.rng.gen_range(0..10);
        self.line(&format!("[{}] = {};", ptr, lit));
    }

    fn stmt_move_pointer(&mut self) {
        let safe = self.safe_pointers();
        let src = match safe.choose(&mut self.rng) {
            Some(p) => p.clone(),
            None => return self.stmt_point_at(true),
        };
        let dst = self.decl_pointer();
        self.line(&format!("{} = move {};", dst, src));
        let src_info = self
            .pointer_mut(&src)
            .map(|p| (p.root_owner.clone(), p.heap_root))
            .expect("move source exists");
        {
            let info = self.pointer_mut(&dst).expect("pointer exists");
            info.deref_safe = true;
            info.root_owner = src_info.0;
            info.heap_root = src_info.1;
        }
        let src_info = self.pointer_mut(&src).expect("move source exists");
        src_info.deref_safe = false;
        src_info.root_owner = None;
        src_info.heap_root = None;
    }

    fn stmt_call(&mut self) {
        if self.helpers.is_empty() {
            return self.stmt_value_arith();
        }
        let idx = self.rng.gen_range(0..self.helpers.len());
        let (params, returns_pointer, name) = {
            let h = &self.helpers[idx];
            (h.params.clone(), h.returns_pointer, h.name.clone())
        };
        let mut args = Vec::new();
        for (class, _) in &params {
            match *class {
                "Pointer" => {
                    let safe = self.safe_pointers();
                    match safe.choose(&mut self.rng) {
                        Some(p) => args.push(p.clone()),
                        None => {
                            self.stmt_point_at(true);
                            let safe = self.safe_pointers();
                            match safe.last() {
                                Some(p) => args.push(p.clone()),
                                None => return,
                            }
                        }
                    }
                }
                "Owner" => {
                    let owners = self.valid_owners();
                    match owners.choose(&mut self.rng) {
                        Some(o) => args.push(o.clone()),
                        None => args.push(self.decl_owner()),
                    }
                }
                _ => {
                    let values = self.all_values();
                    match values.choose(&mut self.rng) {
                        Some(v) => args.push(v.clone()),
                        None => args.push(self.decl_value(true)),
                    }
                }
            }
        }
        let call = format!("{}({})", name, args.join(", "));
        if returns_pointer {
            let result = self.decl_pointer();
            self.line(&format!("{} = {};", result, call));
            // The result derives from the arguments; safe to dereference
            // when every pointer argument was, but the default
            // postcondition also admits null, so treat it as read-only.
            let arg_ptrs: Vec<String> = args
                .iter()
                .zip(&params)
                .filter(|(_, (c, _))| *c == "Pointer")
                .map(|(a, _)| a.clone())
                .collect();
            let root = arg_ptrs
                .first()
                .and_then(|a| self.pointer_mut(a).map(|p| p.root_owner.clone()))
                .flatten();
            let info = self.pointer_mut(&result).expect("pointer exists");
            info.deref_safe = false;
            info.root_owner = root;
        } else {
            self.line(&format!("{};", call));
        }
        // A non-const by-reference Owner argument may be reallocated.
        for (arg, (class, by_ref)) in args.iter().zip(&params) {
            if *class == "Owner" && *by_ref {
                self.invalidate_owner_pointers(arg);
            }
        }
    }

    fn stmt_if(&mut self, depth: usize, budget: &mut usize) {
        let nondet = self.nondet_branches < 3
            && (self.all_uninit().is_empty() || self.rng.gen_bool(0.5));
        let cond = if nondet && !self.all_uninit().is_empty() {
            self.nondet_branches += 1;
            let u = self
                .all_uninit()
                .choose(&mut self.rng)
                .cloned()
                .expect("non-empty");
            format!("{} == {}", u, self.rng.gen_range(0..3))
        } else if nondet {
            self.nondet_branches += 1;
            let u = self.decl_value(false);
            format!("{} == 1", u)
        } else {
            let values = self.all_values();
            match values.choose(&mut self.rng) {
                Some(v) => format!("{} < {}", v, self.rng.gen_range(0..10)),
                None => {
                    let v = self.decl_value(true);
                    format!("{} < 5", v)
                }
            }
        };

        let before = self.scopes.clone();
        self.line(&format!("if ({}) {{", cond));
        self.indent += 1;
        self.scopes.push(Scope::default());
        let n = self.rng.gen_range(1..3.min(*budget).max(2));
        for _ in 0..n {
            if *budget == 0 {
                break;
            }
            *budget -= 1;
            self.safe_arm_stmt(depth);
        }
        self.scopes.pop();
        self.indent -= 1;
        let after_then = self.scopes.clone();

        self.scopes = before.clone();
        self.line("} else {");
        self.indent += 1;
        self.scopes.push(Scope::default());
        let n = self.rng.gen_range(1..3.min(*budget).max(2));
        for _ in 0..n {
            if *budget == 0 {
                break;
            }
            *budget -= 1;
            self.safe_arm_stmt(depth);
        }
        self.scopes.pop();
        self.indent -= 1;
        self.line("}");
        let after_else = self.scopes.clone();

        self.scopes = merge_scopes(before, &after_then, &after_else);
    }

    fn stmt_while(&mut self, budget: &mut usize) {
        let before = self.scopes.clone();
        let nondet = self.nondet_loops < 1 && self.rng.gen_bool(0.4);
        if nondet {
            self.nondet_loops += 1;
            let u = self.decl_value(false);
            self.line(&format!("while ({} == 1) {{", u));
        } else {
            let c = self.decl_value(true);
            let bound = self.rng.gen_range(1..4);
            self.line(&format!("{} = 0;", c));
            self.line(&format!("while ({} < {}) {{", c, bound));
            self.indent += 1;
            self.line(&format!("{} = {} + 1;", c, c));
            self.indent -= 1;
        }
        self.indent += 1;
        self.scopes.push(Scope::default());
        let n = self.rng.gen_range(1..3);
        for _ in 0..n {
            if *budget == 0 {
                break;
            }
            *budget -= 1;
            self.safe_arm_stmt(self.max_depth);
        }
        self.scopes.pop();
        self.indent -= 1;
        self.line("}");
        let after = self.scopes.clone();
        // Anything the body touched is conservatively unsafe afterwards.
        self.scopes = merge_scopes(before.clone(), &after, &before);
    }

    /// Statements safe inside branch arms and loop bodies: they only
    /// create arm-local state or read outer state.
    fn safe_arm_stmt(&mut self, _depth: usize) {
        match self.rng.gen_range(0..4) {
            0 => self.stmt_value_arith(),
            1 => {
                self.decl_value(true);
            }
            2 => self.stmt_deref(),
            _ => {
                let v = self.decl_value(true);
                let lit = self.rng.gen_range(0..5);
                self.line(&format!("{} = {} + {};", v, v, lit));
            }
        }
    }

    // ---- error seeding ---------------------------------------------------

    fn seed_error(&mut self) {
        let mut options: Vec<u32> = vec![0];
        if self.features.heap {
            options.push(1);
            options.push(3);
        }
        if self.features.moves {
            options.push(2);
        }
        options.push(4);
        if self.features.calls && self.helpers.iter().any(|h| h.params.iter().any(|(c, r)| *c == "Owner" && *r)) {
            options.push(5);
        }
        match options.choose(&mut self.rng).copied().expect("non-empty") {
            0 => {
                // Pointer into a block-scoped local, used after the block.
                let ptr = self.decl_pointer();
                self.line("{");
                self.indent += 1;
                let x = self.fresh("x");
                self.line(&format!("let {}: Value;", x));
                self.line(&format!("{} = 1;", x));
                self.line(&format!("{} = &{};", ptr, x));
                self.indent -= 1;
                self.line("}");
                self.stmt_deref_specific(&ptr);
            }
            1 => {
                // Use after delete.
                let ptr = self.decl_pointer();
                self.heap_counter += 1;
                self.line(&format!("{} = new(2);", ptr));
                self.line(&format!("delete {};", ptr));
                let v = match self.all_values().choose(&mut self.rng) {
                    Some(v) => v.clone(),
                    None => self.decl_value(true),
                };
                self.line(&format!("{} = [{}];", v, ptr));
            }
            2 => {
                // Dereference of a moved-from owner.
                let o1 = self.decl_owner();
                let o2 = self.fresh("o");
                self.line(&format!("let {}: Owner;", o2));
                self.scope().owners.push(OwnerInfo {
                    name: o2.clone(),
                    valid: true,
                });
                self.line(&format!("{} = move {};", o2, o1));
                if let Some(info) = self.owner_mut(&o1) {
                    info.valid = false;
                }
                self.invalidate_owner_pointers(&o1);
                let v = match self.all_values().choose(&mut self.rng) {
                    Some(v) => v.clone(),
                    None => self.decl_value(true),
                };
                self.line(&format!("{} = [{}];", v, o1));
            }
            3 => {
                // Double deallocation through an alias.
                let o = self.decl_owner();
                let p = self.decl_pointer();
                let q = self.decl_pointer();
                self.line(&format!("{} = {};", p, o));
                self.line(&format!("{} = {};", q, p));
                self.line(&format!("deallocate({});", p));
                self.invalidate_owner_pointers(&o);
                if let Some(info) = self.owner_mut(&o) {
                    info.valid = false;
                }
                let v = match self.all_values().choose(&mut self.rng) {
                    Some(v) => v.clone(),
                    None => self.decl_value(true),
                };
                self.line(&format!("{} = [{}];", v, q));
            }
            4 => {
                // The branch-join pattern: one arm points into an arm-local.
                let ptr = self.decl_pointer();
                let x = self.decl_value(true);
                let u = self.decl_value(false);
                self.line(&format!("if ({} == 2) {{", u));
                self.indent += 1;
                self.line(&format!("{} = &{};", ptr, x));
                self.indent -= 1;
                self.line("} else {");
                self.indent += 1;
                let y = self.fresh("y");
                self.line(&format!("let {}: Value;", y));
                self.line(&format!("{} = &{};", ptr, y));
                self.indent -= 1;
                self.line("}");
                self.nondet_branches += 1;
                self.stmt_deref_specific(&ptr);
            }
            _ => {
                // Owner reallocated behind a pointer by a callee.
                let helper = self
                    .helpers
                    .iter()
                    .find(|h| h.params.iter().any(|(c, r)| *c == "Owner" && *r))
                    .map(|h| h.name.clone())
                    .expect("owner-mutating helper exists");
                let o = self.decl_owner();
                let p = self.decl_pointer();
                self.line(&format!("{} = {};", p, o));
                let v = match self.all_values().choose(&mut self.rng) {
                    Some(v) => v.clone(),
                    None => self.decl_value(true),
                };
                self.line(&format!("{}({}, {});", helper, o, v));
                self.invalidate_owner_pointers(&o);
                self.line(&format!("{} = [{}];", v, p));
            }
        }
    }

    // ---- top level -------------------------------------------------------

    fn emit_helpers(&mut self) {
        if !self.features.calls {
            return;
        }
        // A pass-through helper that reads its pointer argument.
        self.line("fn use_and_pass(a: Pointer, k: Value) -> Pointer {");
        self.indent += 1;
        self.line("let t: Value;");
        self.line("t = [a];");
        self.line("t = t + k;");
        self.line("return a;");
        self.indent -= 1;
        self.line("}");
        self.out.push('\n');
        self.helpers.push(Helper {
            name: "use_and_pass".into(),
            params: vec![("Pointer", false), ("Value", false)],
            returns_pointer: true,
        });

        if self.features.heap {
            // Reallocates the owner it receives by reference.
            self.line("fn regrow(o: Owner&, n: Value) {");
            self.indent += 1;
            self.line("o = allocate(2);");
            self.line("[o] = 7;");
            self.indent -= 1;
            self.line("}");
            self.out.push('\n');
            self.helpers.push(Helper {
                name: "regrow".into(),
                params: vec![("Owner", true), ("Value", false)],
                returns_pointer: false,
            });
        }
    }

    fn program(&mut self) -> String {
        self.emit_helpers();
        self.line("fn main() {");
        self.indent += 1;
        self.scopes.push(Scope::default());

        let mut budget = self.max_statements;
        // Ensure some raw material exists.
        self.decl_value(true);
        if budget > 4 {
            self.decl_value(true);
            self.decl_owner();
        }

        let seeded = self.rng.gen_bool(0.3);
        let seed_at = if budget > 2 {
            self.rng.gen_range(budget / 2..budget)
        } else {
            0
        };

        while budget > 0 {
            if seeded && budget == seed_at.max(1) {
                self.seed_error();
                budget = budget.saturating_sub(1);
                continue;
            }
            budget -= 1;
            let depth_left = self.max_depth;
            let mut choices: Vec<u32> = vec![0, 0, 1, 1, 2, 2, 2];
            if self.features.heap {
                choices.push(3);
                choices.push(4);
            }
            if self.features.moves {
                choices.push(5);
            }
            if self.features.calls {
                choices.push(6);
                choices.push(6);
            }
            if depth_left > 0 {
                choices.push(7);
                if self.features.loops {
                    choices.push(8);
                }
            }
            match choices.choose(&mut self.rng).copied().expect("non-empty") {
                0 => self.stmt_value_arith(),
                1 => self.stmt_point_at(true),
                2 => self.stmt_deref(),
                3 => self.stmt_owner_realloc(),
                4 => self.stmt_heap_pair(),
                5 => self.stmt_move_pointer(),
                6 => self.stmt_call(),
                7 => self.stmt_if(depth_left - 1, &mut budget),
                _ => self.stmt_while(&mut budget),
            }
        }

        self.scopes.pop();
        self.indent -= 1;
        self.line("}");
        std::mem::take(&mut self.out)
    }
}

/// Join of the generator's validity state after a two-armed region:
/// safety survives only when both arms preserved it.
fn merge_scopes(mut base: Vec<Scope>, then_state: &[Scope], else_state: &[Scope]) -> Vec<Scope> {
    let find_ptr = |state: &[Scope], name: &str| -> Option<bool> {
        state
            .iter()
            .flat_map(|s| s.pointers.iter())
            .find(|p| p.name == name)
            .map(|p| p.deref_safe)
    };
    let find_owner = |state: &[Scope], name: &str| -> Option<bool> {
        state
            .iter()
            .flat_map(|s| s.owners.iter())
            .find(|o| o.name == name)
            .map(|o| o.valid)
    };
    for scope in &mut base {
        for p in &mut scope.pointers {
            let t = find_ptr(then_state, &p.name).unwrap_or(false);
            let e = find_ptr(else_state, &p.name).unwrap_or(false);
            p.deref_safe = p.deref_safe && t && e;
        }
        for o in &mut scope.owners {
            let t = find_owner(then_state, &o.name).unwrap_or(false);
            let e = find_owner(else_state, &o.name).unwrap_or(false);
            o.valid = o.valid && t && e;
        }
    }
    base
}

// ---------------------------------------------------------------------
// Differential fuzzing driver

#[derive(Clone, Debug, Default)]
pub struct FuzzReport {
    pub programs: usize,
    pub paths: usize,
    pub incomplete_enumerations: usize,
    pub concrete_errors: usize,
    /// Concrete memory errors with no static E001/E002/E004/E005 at the
    /// same statement or an enclosing call site. Must be zero.
    pub missed: usize,
    pub missed_seeds: Vec<u64>,
    /// Programs with static errors but no concrete memory error on any
    /// enumerated path (expected nonzero: the analysis is conservative).
    pub static_only_positives: usize,
    /// Programs containing each instruction kind at least once.
    pub kind_coverage: BTreeMap<InstrKind, usize>,
}

impl FuzzReport {
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "programs generated:        {}", self.programs);
        let _ = writeln!(out, "paths enumerated:          {}", self.paths);
        let _ = writeln!(out, "incomplete enumerations:   {}", self.incomplete_enumerations);
        let _ = writeln!(out, "concrete memory errors:    {}", self.concrete_errors);
        let _ = writeln!(out, "missed by static analysis: {}", self.missed);
        let _ = writeln!(
            out,
            "static-only positives:     {} (conservative over-approximation)",
            self.static_only_positives
        );
        if !self.missed_seeds.is_empty() {
            let seeds: Vec<String> = self.missed_seeds.iter().map(|s| s.to_string()).collect();
            let _ = writeln!(out, "missed seeds:              {}", seeds.join(", "));
        }
        let _ = writeln!(out, "instruction kind coverage (programs containing each):");
        for kind in InstrKind::ALL {
            let n = self.kind_coverage.get(&kind).copied().unwrap_or(0);
            let _ = writeln!(out, "  {:<12} {}", format!("{:?}", kind), n);
        }
        out
    }
}

/// Runs the oracle loop: generate, analyze, enumerate concrete paths, and
/// check that every concrete deref/dealloc error is covered by a static
/// diagnostic at the erroring statement or one of its active call sites.
pub fn fuzz(count: usize, base_seed: u64, features: FeatureMask, bounds: PathBounds) -> FuzzReport {
    let mut report = FuzzReport::default();
    for i in 0..count {
        let seed = base_seed.wrapping_add(i as u64);
        let config = GenConfig {
            seed,
            features,
            ..GenConfig::default()
        };
        let program = generate(&config);
        report.programs += 1;

        let analysis = match analyze_program(program, &AnalyzeOptions::default()) {
            Ok(a) => a,
            Err(e) => panic!("generated program (seed {}) failed to analyze: {}", seed, e),
        };
        let mut kinds_seen: BTreeMap<InstrKind, bool> = BTreeMap::new();
        for f in &analysis.norm.functions {
            for node in &f.cfg.nodes {
                kinds_seen.insert(node.instr.kind(), true);
            }
        }
        for (kind, _) in kinds_seen {
            *report.kind_coverage.entry(kind).or_insert(0) += 1;
        }

        let covered_lines: Vec<u32> = analysis
            .diagnostics
            .iter()
            .filter(|d| {
                matches!(d.code, Code::E001 | Code::E002 | Code::E004 | Code::E005)
            })
            .map(|d| d.loc.line)
            .collect();

        let paths = enumerate_paths(&analysis.norm, "main", bounds);
        report.paths += paths.outcomes.len();
        if !paths.complete {
            report.incomplete_enumerations += 1;
        }

        let mut had_concrete = false;
        for err in paths.memory_errors() {
            had_concrete = true;
            report.concrete_errors += 1;
            let mut candidate_lines: Vec<u32> = vec![err.loc.line];
            candidate_lines.extend(err.stack.iter().map(|l| l.line));
            let covered = candidate_lines
                .iter()
                .any(|line| covered_lines.contains(line));
            if !covered {
                report.missed += 1;
                if !report.missed_seeds.contains(&seed) {
                    report.missed_seeds.push(seed);
                }
            }
        }
        if !had_concrete && !covered_lines.is_empty() {
            report.static_only_positives += 1;
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pretty::print_program;

    #[test]
    fn generation_is_deterministic() {
        let config = GenConfig::with_seed(42);
        assert_eq!(generate_source(&config), generate_source(&config));
    }

    #[test]
    fn zero_budget_yields_minimal_program() {
        let config = GenConfig {
            seed: 1,
            max_statements: 0,
            ..GenConfig::default()
        };
        let program = generate(&config);
        assert!(program.function("main").is_some());
    }

    #[test]
    fn generated_programs_reparse() {
        for seed in 0..50 {
            let program = generate(&GenConfig::with_seed(seed));
            let printed = print_program(&program);
            let reparsed = parse_program(&printed, "<roundtrip>").unwrap_or_else(|e| {
                panic!("seed {} failed to reparse: {}\n{}", seed, e, printed)
            });
            assert_eq!(print_program(&reparsed), printed, "seed {}", seed);
        }
    }

    #[test]
    fn fuzz_smoke_no_missed_errors() {
        let report = fuzz(60, 1, FeatureMask::default(), PathBounds::default());
        assert_eq!(report.missed, 0, "\n{}", report.render());
        assert!(report.paths >= 60);
    }

    #[test]
    fn feature_mask_parsing() {
        let mask = FeatureMask::parse("moves,heap").unwrap();
        assert!(mask.moves && mask.heap && !mask.calls && !mask.loops);
        assert!(FeatureMask::parse("bogus").is_err());
        let all = FeatureMask::parse("").unwrap();
        assert!(all.moves && all.heap && all.calls && all.loops);
    }
}
