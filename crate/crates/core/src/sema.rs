//! Semantic validation passes that run between parsing and lowering:
//! named-type resolution, annotation checking, scope checking, and the
//! syntactic pointer-arithmetic ban.

use crate::ast::*;
use crate::diag::{Code, Diagnostic};
use crate::loc::SourceLoc;
use crate::typeclass::{classify, FactsSet};
use std::collections::{BTreeMap, HashSet};
use thiserror::Error;

#[derive(Debug, Error, Clone)]
#[error("{loc}: error: {message}")]
pub struct SemaError {
    pub loc: SourceLoc,
    pub message: String,
}

fn err<T>(loc: &SourceLoc, message: impl Into<String>) -> Result<T, SemaError> {
    Err(SemaError {
        loc: loc.clone(),
        message: message.into(),
    })
}

// ---------------------------------------------------------------------
// Named-type resolution

/// Resolves every `TypeRef::Named` in the program through the type-facts
/// classifier. Programs that only use the three class keywords need no
/// facts file.
pub fn resolve_types(program: &mut Program, facts: Option<&FactsSet>) -> Result<(), SemaError> {
    let mut resolve = |ty: &mut TypeRef| -> Result<(), SemaError> {
        if let TypeRef::Named {
            name,
            is_const,
            loc,
        } = ty
        {
            let facts = match facts {
                Some(f) => f,
                None => {
                    return err(
                        loc,
                        format!("type name '{}' requires a --type-facts file", name),
                    )
                }
            };
            let kind = classify(name, facts).map_err(|e| SemaError {
                loc: loc.clone(),
                message: e.to_string(),
            })?;
            *ty = TypeRef::Class(TypeClass {
                kind,
                is_const: *is_const,
            });
        }
        Ok(())
    };

    for g in &mut program.globals {
        resolve(&mut g.class)?;
    }
    for f in &mut program.functions {
        for p in &mut f.params {
            resolve(&mut p.class)?;
        }
        if let Some(ret) = &mut f.return_class {
            resolve(ret)?;
        }
        resolve_block(&mut f.body, &mut resolve)?;
    }
    Ok(())
}

fn resolve_block(
    block: &mut Block,
    resolve: &mut impl FnMut(&mut TypeRef) -> Result<(), SemaError>,
) -> Result<(), SemaError> {
    for stmt in &mut block.stmts {
        match stmt {
            Stmt::Let { class, .. } | Stmt::Create { class, .. } => resolve(class)?,
            Stmt::If {
                then_block,
                else_block,
                ..
            } => {
                resolve_block(then_block, resolve)?;
                if let Some(e) = else_block {
                    resolve_block(e, resolve)?;
                }
            }
            Stmt::While { body, .. } => resolve_block(body, resolve)?,
            Stmt::Block(b) => resolve_block(b, resolve)?,
            _ => {}
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------
// Annotation validation

/// Checks that annotations are well formed: pre targets name Pointer
/// parameters, the post target is the function name, lifetime tokens name
/// parameters with a lifetime, and no target is annotated twice.
pub fn validate_annotations(program: &Program) -> Vec<Diagnostic> {
    let mut diags = Vec::new();
    for f in &program.functions {
        let mut pre_seen: HashSet<&str> = HashSet::new();
        let mut post_seen = false;
        for ann in &f.annotations {
            match ann.kind {
                AnnotationKind::Pre => {
                    match f.param(&ann.target) {
                        None => diags.push(Diagnostic::new(
                            Code::E000,
                            ann.loc.clone(),
                            format!(
                                "precondition names unknown parameter '{}' of function '{}'",
                                ann.target, f.name
                            ),
                        )),
                        Some(p) => {
                            if p.class.class().kind != TypeKind::Pointer {
                                diags.push(Diagnostic::new(
                                    Code::E000,
                                    ann.loc.clone(),
                                    format!(
                                        "precondition target '{}' must be a Pointer parameter",
                                        ann.target
                                    ),
                                ));
                            }
                        }
                    }
                    if !pre_seen.insert(ann.target.as_str()) {
                        diags.push(Diagnostic::new(
                            Code::E000,
                            ann.loc.clone(),
                            format!("parameter '{}' has more than one precondition", ann.target),
                        ));
                    }
                }
                AnnotationKind::Post => {
                    if ann.target != f.name {
                        diags.push(Diagnostic::new(
                            Code::E000,
                            ann.loc.clone(),
                            format!(
                                "postcondition target '{}' must be the function name '{}'",
                                ann.target, f.name
                            ),
                        ));
                    }
                    if post_seen {
                        diags.push(Diagnostic::new(
                            Code::E000,
                            ann.loc.clone(),
                            format!("function '{}' has more than one postcondition", f.name),
                        ));
                    }
                    post_seen = true;
                }
            }
            for token in &ann.lifetimes {
                if let LifetimeToken::Param(name) = token {
                    match f.param(name) {
                        None => diags.push(Diagnostic::new(
                            Code::E000,
                            ann.loc.clone(),
                            format!("lifetime set names unknown parameter '{}'", name),
                        )),
                        Some(p) => {
                            if p.class.class().kind == TypeKind::Value {
                                diags.push(Diagnostic::new(
                                    Code::E000,
                                    ann.loc.clone(),
                                    format!(
                                        "lifetime token '{}' names a Value parameter, which has no lifetime",
                                        name
                                    ),
                                ));
                            }
                        }
                    }
                }
            }
        }
    }
    diags
}

/// Global variables must be Owners or Values: the analysis does not track
/// psets of globals, so a global Pointer could smuggle a dangling address
/// past the checker.
pub fn validate_globals(program: &Program) -> Vec<Diagnostic> {
    let mut diags = Vec::new();
    for g in &program.globals {
        if g.class.class().kind == TypeKind::Pointer {
            diags.push(Diagnostic::new(
                Code::E000,
                g.loc.clone(),
                format!("global '{}' must be an Owner or Value, not a Pointer", g.name),
            ));
        }
    }
    diags
}

// ---------------------------------------------------------------------
// Scope checking

/// Verifies that every referenced variable is declared somewhere in the
/// function (as a parameter, global, `let` or `create`). Runs on the
/// lowered program where scoping has already been made explicit.
pub fn check_scopes(program: &Program) -> Result<(), SemaError> {
    for f in &program.functions {
        let mut names: HashSet<&str> = HashSet::new();
        for g in &program.globals {
            names.insert(&g.name);
        }
        for p in &f.params {
            names.insert(&p.name);
        }
        collect_created(&f.body, &mut names);
        check_block(&f.body, &names)?;
    }
    Ok(())
}

fn collect_created<'a>(block: &'a Block, names: &mut HashSet<&'a str>) {
    for stmt in &block.stmts {
        match stmt {
            Stmt::Let { var, .. } | Stmt::Create { var, .. } => {
                names.insert(var);
            }
            Stmt::If {
                then_block,
                else_block,
                ..
            } => {
                collect_created(then_block, names);
                if let Some(e) = else_block {
                    collect_created(e, names);
                }
            }
            Stmt::While { body, .. } => collect_created(body, names),
            Stmt::Block(b) => collect_created(b, names),
            _ => {}
        }
    }
}

fn check_block(block: &Block, names: &HashSet<&str>) -> Result<(), SemaError> {
    let check_name = |name: &str, loc: &SourceLoc| -> Result<(), SemaError> {
        if names.contains(name) {
            Ok(())
        } else {
            err(loc, format!("use of undeclared variable '{}'", name))
        }
    };
    let check_expr = |e: &Expr| -> Result<(), SemaError> {
        walk_expr(e, &mut |e| match e {
            Expr::VarRef { name, loc }
            | Expr::AddressOf { var: name, loc }
            | Expr::MoveOf { var: name, loc }
            | Expr::IncDec { var: name, loc, .. } => check_name(name, loc),
            _ => Ok(()),
        })
    };
    for stmt in &block.stmts {
        match stmt {
            Stmt::Let { .. } | Stmt::Create { .. } => {}
            Stmt::Destroy { var, loc } => check_name(var, loc)?,
            Stmt::Allocate { var, size, loc } => {
                check_name(var, loc)?;
                check_expr(size)?;
            }
            Stmt::Deallocate { arg, .. } => check_expr(arg)?,
            Stmt::New { var, size, loc } => {
                check_name(var, loc)?;
                check_expr(size)?;
            }
            Stmt::Delete { arg, .. } => check_expr(arg)?,
            Stmt::Lookup { var, addr, loc } => {
                check_name(var, loc)?;
                check_expr(addr)?;
            }
            Stmt::Mutation { addr, value, .. } => {
                check_expr(addr)?;
                check_expr(value)?;
            }
            Stmt::Assign { var, value, loc } => {
                check_name(var, loc)?;
                check_expr(value)?;
            }
            Stmt::Move { dst, src, loc } => {
                check_name(dst, loc)?;
                check_name(src, loc)?;
            }
            Stmt::CompoundAssign { var, value, loc, .. } => {
                check_name(var, loc)?;
                check_expr(value)?;
            }
            Stmt::If {
                cond,
                then_block,
                else_block,
                ..
            } => {
                check_expr(cond)?;
                check_block(then_block, names)?;
                if let Some(e) = else_block {
                    check_block(e, names)?;
                }
            }
            Stmt::While { cond, body, .. } => {
                check_expr(cond)?;
                check_block(body, names)?;
            }
            Stmt::Call { result, args, loc, .. } => {
                if let Some(r) = result {
                    check_name(r, loc)?;
                }
                for a in args {
                    check_expr(a)?;
                }
            }
            Stmt::Return { value, .. } => {
                if let Some(v) = value {
                    check_expr(v)?;
                }
            }
            Stmt::Block(b) => check_block(b, names)?,
            Stmt::ExprStmt { expr, .. } => check_expr(expr)?,
        }
    }
    Ok(())
}

fn walk_expr(
    e: &Expr,
    visit: &mut impl FnMut(&Expr) -> Result<(), SemaError>,
) -> Result<(), SemaError> {
    visit(e)?;
    match e {
        Expr::Deref { inner, .. } => walk_expr(inner, visit),
        Expr::BinOp { lhs, rhs, .. } => {
            walk_expr(lhs, visit)?;
            walk_expr(rhs, visit)
        }
        Expr::Index { base, index, .. } => {
            walk_expr(base, visit)?;
            walk_expr(index, visit)
        }
        Expr::Call { args, .. } => {
            for a in args {
                walk_expr(a, visit)?;
            }
            Ok(())
        }
        _ => Ok(()),
    }
}

// ---------------------------------------------------------------------
// Pointer-arithmetic ban

/// One E003 per occurrence of the twelve banned forms with a
/// Pointer-classified operand: `p+v`, `v+p`, `p++`, `++p`, `p-v`, `v-p`,
/// `p--`, `--p`, `p+=v`, `p-=v`, `p[x]`, `x[p]`.
pub fn reject_pointer_arith(program: &Program) -> Vec<Diagnostic> {
    let mut diags = Vec::new();
    let globals: BTreeMap<&str, TypeKind> = program
        .globals
        .iter()
        .map(|g| (g.name.as_str(), g.class.class().kind))
        .collect();
    for f in &program.functions {
        let mut env = ClassEnv {
            scopes: vec![BTreeMap::new()],
            globals: &globals,
        };
        for p in &f.params {
            env.declare(&p.name, p.class.class().kind);
        }
        arith_block(&f.body, &mut env, &mut diags);
    }
    diags
}

struct ClassEnv<'a> {
    scopes: Vec<BTreeMap<String, TypeKind>>,
    globals: &'a BTreeMap<&'a str, TypeKind>,
}

impl ClassEnv<'_> {
    fn declare(&mut self, name: &str, kind: TypeKind) {
        self.scopes
            .last_mut()
            .expect("scope stack is never empty")
            .insert(name.to_string(), kind);
    }

    fn is_pointer(&self, name: &str) -> bool {
        for scope in self.scopes.iter().rev() {
            if let Some(kind) = scope.get(name) {
                return *kind == TypeKind::Pointer;
            }
        }
        self.globals.get(name) == Some(&TypeKind::Pointer)
    }
}

fn arith_block(block: &Block, env: &mut ClassEnv, diags: &mut Vec<Diagnostic>) {
    env.scopes.push(BTreeMap::new());
    for stmt in &block.stmts {
        match stmt {
            Stmt::Let { var, class, .. } | Stmt::Create { var, class, .. } => {
                env.declare(var, class.class().kind);
            }
            Stmt::Allocate { size, .. } | Stmt::New { size, .. } => {
                arith_expr(size, env, diags);
            }
            Stmt::Deallocate { arg, .. } | Stmt::Delete { arg, .. } => {
                arith_expr(arg, env, diags);
            }
            Stmt::Lookup { addr, .. } => arith_expr(addr, env, diags),
            Stmt::Mutation { addr, value, .. } => {
                arith_expr(addr, env, diags);
                arith_expr(value, env, diags);
            }
            Stmt::Assign { value, .. } => arith_expr(value, env, diags),
            Stmt::CompoundAssign { var, op, value, loc } => {
                if matches!(op, BinOpKind::Add | BinOpKind::Sub) && env.is_pointer(var) {
                    diags.push(arith_diag(loc, &format!("{} {}= ...", var, op.symbol())));
                }
                arith_expr(value, env, diags);
            }
            Stmt::If {
                cond,
                then_block,
                else_block,
                ..
            } => {
                arith_expr(cond, env, diags);
                arith_block(then_block, env, diags);
                if let Some(e) = else_block {
                    arith_block(e, env, diags);
                }
            }
            Stmt::While { cond, body, .. } => {
                arith_expr(cond, env, diags);
                arith_block(body, env, diags);
            }
            Stmt::Call { args, .. } => {
                for a in args {
                    arith_expr(a, env, diags);
                }
            }
            Stmt::Return { value: Some(e), .. } => arith_expr(e, env, diags),
            Stmt::Block(b) => arith_block(b, env, diags),
            Stmt::ExprStmt { expr, .. } => arith_expr(expr, env, diags),
            _ => {}
        }
    }
    env.scopes.pop();
}

fn arith_diag(loc: &SourceLoc, form: &str) -> Diagnostic {
    Diagnostic::new(
        Code::E003,
        loc.clone(),
        format!("raw pointer arithmetic is forbidden: {}", form),
    )
}

fn pointer_var<'e>(e: &'e Expr, env: &ClassEnv) -> Option<&'e str> {
    match e {
        Expr::VarRef { name, .. } if env.is_pointer(name) => Some(name),
        _ => None,
    }
}

fn arith_expr(e: &Expr, env: &ClassEnv, diags: &mut Vec<Diagnostic>) {
    match e {
        Expr::BinOp { op, lhs, rhs, loc } => {
            if matches!(op, BinOpKind::Add | BinOpKind::Sub) {
                let p = pointer_var(lhs, env).or_else(|| pointer_var(rhs, env));
                if let Some(p) = p {
                    diags.push(arith_diag(
                        loc,
                        &format!("'{}' used in a {} expression", p, op.symbol()),
                    ));
                }
            }
            arith_expr(lhs, env, diags);
            arith_expr(rhs, env, diags);
        }
        Expr::IncDec { var, op, loc, .. } => {
            if env.is_pointer(var) {
                let sym = match op {
                    IncDecOp::Inc => "++",
                    IncDecOp::Dec => "--",
                };
                diags.push(arith_diag(loc, &format!("'{}' with operator {}", var, sym)));
            }
        }
        Expr::Index { base, index, loc } => {
            let p = pointer_var(base, env).or_else(|| pointer_var(index, env));
            if let Some(p) = p {
                diags.push(arith_diag(loc, &format!("'{}' used in an index expression", p)));
            }
            arith_expr(base, env, diags);
            arith_expr(index, env, diags);
        }
        Expr::Deref { inner, .. } => arith_expr(inner, env, diags),
        Expr::Call { args, .. } => {
            for a in args {
                arith_expr(a, env, diags);
            }
        }
        _ => {}
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::parse_program;

    #[test]
    fn post_with_null_is_well_formed() {
        let prog =
            parse_program("post(g,{x,null}) fn g(x: Pointer) -> Pointer { return x; }", "t.lt")
                .unwrap();
        assert!(validate_annotations(&prog).is_empty());
    }

    #[test]
    fn post_target_must_match_function_name() {
        let prog =
            parse_program("post(h,{q}) fn g(q: Pointer) -> Pointer { return q; }", "t.lt").unwrap();
        let diags = validate_annotations(&prog);
        assert_eq!(diags.len(), 1);
        assert!(diags[0].message.contains("must be the function name"));
    }

    #[test]
    fn pre_with_unknown_token_flagged() {
        let prog = parse_program("pre(z,{w}) fn f(z: Pointer) {}", "t.lt").unwrap();
        let diags = validate_annotations(&prog);
        assert_eq!(diags.len(), 1);
        assert!(diags[0].message.contains("unknown parameter 'w'"));
    }

    #[test]
    fn pre_target_must_be_pointer() {
        let prog = parse_program("pre(v,{v}) fn f(v: Value) {}", "t.lt").unwrap();
        let diags = validate_annotations(&prog);
        assert!(diags
            .iter()
            .any(|d| d.message.contains("must be a Pointer parameter")));
    }

    #[test]
    fn twelve_pointer_arith_forms_each_flagged_once() {
        let src = "fn main() {
            let p: Pointer;
            let q: Pointer;
            let v: Value;
            let n: Value;
            q = p + v;
            q = v + p;
            p++;
            ++p;
            q = p - v;
            q = v - p;
            p--;
            --p;
            p += v;
            p -= v;
            n = p[v];
            n = v[p];
        }";
        let prog = parse_program(src, "t.lt").unwrap();
        let diags = reject_pointer_arith(&prog);
        assert_eq!(diags.len(), 12);
        assert!(diags.iter().all(|d| d.code == Code::E003));
    }

    #[test]
    fn value_arithmetic_not_flagged() {
        let src = "fn main() {
            let a: Value;
            let b: Value;
            let n: Value;
            n = a + b;
            a++;
            b -= 1;
            n = a[b];
        }";
        let prog = parse_program(src, "t.lt").unwrap();
        assert!(reject_pointer_arith(&prog).is_empty());
    }

    #[test]
    fn both_index_operands_pointer_is_one_diagnostic() {
        let src = "fn main() { let p: Pointer; let q: Pointer; let n: Value; n = p[q]; }";
        let prog = parse_program(src, "t.lt").unwrap();
        assert_eq!(reject_pointer_arith(&prog).len(), 1);
    }

    #[test]
    fn shadowing_respects_scopes() {
        // Inner `p` is a Value, so `p + 1` inside the block is fine; the
        // outer use afterwards is pointer arithmetic.
        let src = "fn main() {
            let p: Pointer;
            let n: Value;
            {
                let p: Value;
                n = p + 1;
            }
            n = p + 1;
        }";
        let prog = parse_program(src, "t.lt").unwrap();
        assert_eq!(reject_pointer_arith(&prog).len(), 1);
    }

    #[test]
    fn undeclared_variable_rejected() {
        let prog = parse_program("fn main() { x = 1; }", "t.lt").unwrap();
        assert!(check_scopes(&prog).is_err());
    }
}
