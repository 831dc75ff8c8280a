//! Pretty-printer for programs.
//!
//! The output re-parses to a structurally identical AST, which the
//! round-trip tests exercise by comparing printed fixed points.

use crate::ast::*;
use std::fmt::Write;

pub fn print_program(program: &Program) -> String {
    let mut out = String::new();
    for g in &program.globals {
        let _ = writeln!(out, "global {}: {};", g.name, g.class);
    }
    if !program.globals.is_empty() && !program.functions.is_empty() {
        out.push('\n');
    }
    for (i, f) in program.functions.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        print_function(&mut out, f);
    }
    out
}

fn print_function(out: &mut String, f: &Function) {
    for ann in &f.annotations {
        let kw = match ann.kind {
            AnnotationKind::Pre => "pre",
            AnnotationKind::Post => "post",
        };
        let toks: Vec<String> = ann.lifetimes.iter().map(|t| t.to_string()).collect();
        let _ = writeln!(out, "{}({},{{{}}})", kw, ann.target, toks.join(","));
    }
    let params: Vec<String> = f
        .params
        .iter()
        .map(|p| {
            format!(
                "{}: {}{}",
                p.name,
                p.class,
                if p.by_ref { "&" } else { "" }
            )
        })
        .collect();
    let _ = write!(out, "fn {}({})", f.name, params.join(", "));
    if let Some(ret) = &f.return_class {
        let _ = write!(out, " -> {}", ret);
    }
    out.push(' ');
    print_block(out, &f.body, 0);
    out.push('\n');
}

fn indent(out: &mut String, depth: usize) {
    for _ in 0..depth {
        out.push_str("    ");
    }
}

fn print_block(out: &mut String, block: &Block, depth: usize) {
    out.push_str("{\n");
    for stmt in &block.stmts {
        print_stmt(out, stmt, depth + 1);
    }
    indent(out, depth);
    out.push('}');
}

fn print_stmt(out: &mut String, stmt: &Stmt, depth: usize) {
    indent(out, depth);
    match stmt {
        Stmt::Let { var, class, .. } => {
            let _ = writeln!(out, "let {}: {};", var, class);
        }
        Stmt::Create { var, class, .. } => {
            let _ = writeln!(out, "create({}, {});", var, class);
        }
        Stmt::Destroy { var, .. } => {
            let _ = writeln!(out, "destroy({});", var);
        }
        Stmt::Allocate { var, size, .. } => {
            let _ = writeln!(out, "{} = allocate({});", var, print_expr(size));
        }
        Stmt::Deallocate { arg, .. } => {
            let _ = writeln!(out, "deallocate({});", print_expr(arg));
        }
        Stmt::New { var, size, .. } => {
            let _ = writeln!(out, "{} = new({});", var, print_expr(size));
        }
        Stmt::Delete { arg, .. } => {
            let _ = writeln!(out, "delete {};", print_expr(arg));
        }
        Stmt::Lookup { var, addr, .. } => {
            let _ = writeln!(out, "{} = [{}];", var, print_expr(addr));
        }
        Stmt::Mutation { addr, value, .. } => {
            let _ = writeln!(out, "[{}] = {};", print_expr(addr), print_expr(value));
        }
        Stmt::Assign { var, value, .. } => {
            let _ = writeln!(out, "{} = {};", var, print_expr(value));
        }
        Stmt::Move { dst, src, .. } => {
            let _ = writeln!(out, "{} = move {};", dst, src);
        }
        Stmt::CompoundAssign { var, op, value, .. } => {
            let _ = writeln!(out, "{} {}= {};", var, op.symbol(), print_expr(value));
        }
        Stmt::If {
            cond,
            then_block,
            else_block,
            ..
        } => {
            let _ = write!(out, "if ({}) ", print_expr(cond));
            print_block(out, then_block, depth);
            if let Some(els) = else_block {
                out.push_str(" else ");
                print_block(out, els, depth);
            }
            out.push('\n');
        }
        Stmt::While { cond, body, .. } => {
            let _ = write!(out, "while ({}) ", print_expr(cond));
            print_block(out, body, depth);
            out.push('\n');
        }
        Stmt::Call {
            result,
            callee,
            args,
            ..
        } => {
            let args: Vec<String> = args.iter().map(print_expr).collect();
            match result {
                Some(r) => {
                    let _ = writeln!(out, "{} = {}({});", r, callee, args.join(", "));
                }
                None => {
                    let _ = writeln!(out, "{}({});", callee, args.join(", "));
                }
            }
        }
        Stmt::Return { value, .. } => match value {
            Some(e) => {
                let _ = writeln!(out, "return {};", print_expr(e));
            }
            None => {
                let _ = writeln!(out, "return;");
            }
        },
        Stmt::Block(b) => {
            print_block(out, b, depth);
            out.push('\n');
        }
        Stmt::ExprStmt { expr, .. } => {
            let _ = writeln!(out, "{};", print_expr(expr));
        }
    }
}

pub fn print_expr(expr: &Expr) -> String {
    match expr {
        Expr::VarRef { name, .. } => name.clone(),
        Expr::IntLit { value, .. } => value.to_string(),
        Expr::NullLit { .. } => "null".into(),
        Expr::AddressOf { var, .. } => format!("&{}", var),
        Expr::Deref { inner, .. } => format!("*{}", paren_unary(inner)),
        Expr::MoveOf { var, .. } => format!("move {}", var),
        Expr::BinOp { op, lhs, rhs, .. } => format!(
            "({} {} {})",
            print_expr(lhs),
            op.symbol(),
            print_expr(rhs)
        ),
        Expr::IncDec {
            op, prefix, var, ..
        } => {
            let sym = match op {
                IncDecOp::Inc => "++",
                IncDecOp::Dec => "--",
            };
            if *prefix {
                format!("{}{}", sym, var)
            } else {
                format!("{}{}", var, sym)
            }
        }
        Expr::Index { base, index, .. } => {
            format!("{}[{}]", paren_unary(base), print_expr(index))
        }
        Expr::Call { callee, args, .. } => {
            let args: Vec<String> = args.iter().map(print_expr).collect();
            format!("{}({})", callee, args.join(", "))
        }
    }
}

fn paren_unary(expr: &Expr) -> String {
    match expr {
        Expr::VarRef { .. } | Expr::IntLit { .. } | Expr::NullLit { .. } => print_expr(expr),
        Expr::BinOp { .. } => print_expr(expr), // already parenthesized
        _ => format!("({})", print_expr(expr)),
    }
}
