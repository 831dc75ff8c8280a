//! Recursive-descent parser producing the annotated AST.

use crate::ast::*;
use crate::lexer::{tokenize, Token, TokenKind};
use crate::loc::SourceLoc;
use std::collections::HashSet;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error, Clone)]
#[error("{loc}: error: {message}")]
pub struct ParseError {
    pub loc: SourceLoc,
    pub message: String,
}

pub type PResult<T> = Result<T, ParseError>;

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn current(&self) -> &Token {
        &self.tokens[self.pos.min(self.tokens.len() - 1)]
    }

    fn kind(&self) -> TokenKind {
        self.current().kind
    }

    fn peek_kind(&self, offset: usize) -> TokenKind {
        self.tokens
            .get(self.pos + offset)
            .map(|t| t.kind)
            .unwrap_or(TokenKind::Eof)
    }

    fn loc(&self) -> SourceLoc {
        self.current().loc.clone()
    }

    fn advance(&mut self) -> Token {
        let tok = self.current().clone();
        if self.pos < self.tokens.len() - 1 {
            self.pos += 1;
        }
        tok
    }

    fn check(&self, kind: TokenKind) -> bool {
        self.kind() == kind
    }

    fn consume(&mut self, kind: TokenKind) -> bool {
        if self.check(kind) {
            self.advance();
            true
        } else {
            false
        }
    }

    fn err<T>(&self, message: impl Into<String>) -> PResult<T> {
        Err(ParseError {
            loc: self.loc(),
            message: message.into(),
        })
    }

    fn expect(&mut self, kind: TokenKind, what: &str) -> PResult<Token> {
        if self.check(kind) {
            Ok(self.advance())
        } else {
            let got = match self.kind() {
                TokenKind::Eof => "end of input".to_string(),
                _ => format!("'{}'", self.current().text),
            };
            self.err(format!("expected {}, found {}", what, got))
        }
    }

    fn expect_ident(&mut self, what: &str) -> PResult<Token> {
        self.expect(TokenKind::Ident, what)
    }

    // ---- types ------------------------------------------------------

    /// `["const"] (Owner|Pointer|Value|NAME)`. Named types are resolved
    /// through the type-facts file later in the pipeline.
    fn parse_type(&mut self) -> PResult<TypeRef> {
        let is_const = self.consume(TokenKind::KwConst);
        let ty = match self.kind() {
            TokenKind::KwOwner => {
                self.advance();
                TypeRef::Class(TypeClass {
                    kind: TypeKind::Owner,
                    is_const,
                })
            }
            TokenKind::KwPointer => {
                self.advance();
                TypeRef::Class(TypeClass {
                    kind: TypeKind::Pointer,
                    is_const,
                })
            }
            TokenKind::KwValue => {
                self.advance();
                TypeRef::Class(TypeClass {
                    kind: TypeKind::Value,
                    is_const,
                })
            }
            TokenKind::Ident => {
                let tok = self.advance();
                TypeRef::Named {
                    name: tok.text,
                    is_const,
                    loc: tok.loc,
                }
            }
            _ => return self.err("expected a type (Owner, Pointer, Value or a type name)"),
        };
        Ok(ty)
    }

    // ---- annotations --------------------------------------------------

    fn parse_annotation(&mut self, kind: AnnotationKind) -> PResult<Vec<Annotation>> {
        let loc = self.advance().loc; // pre / post
        self.expect(TokenKind::LParen, "'('")?;
        let mut out = Vec::new();
        loop {
            let target = self.expect_ident("an annotation target name")?;
            self.expect(TokenKind::Comma, "','")?;
            self.expect(TokenKind::LBrace, "'{'")?;
            let mut lifetimes = Vec::new();
            if !self.check(TokenKind::RBrace) {
                loop {
                    let tok = match self.kind() {
                        TokenKind::KwNull => {
                            self.advance();
                            LifetimeToken::Null
                        }
                        TokenKind::KwGlobal => {
                            self.advance();
                            LifetimeToken::Global
                        }
                        TokenKind::Ident if self.current().text == "invalid" => {
                            self.advance();
                            LifetimeToken::Invalid
                        }
                        TokenKind::Ident => LifetimeToken::Param(self.advance().text),
                        _ => return self.err("expected a lifetime (name, null, global or invalid)"),
                    };
                    lifetimes.push(tok);
                    if !self.consume(TokenKind::Comma) {
                        break;
                    }
                }
            }
            let close = self.expect(TokenKind::RBrace, "'}'")?;
            if lifetimes.is_empty() {
                return Err(ParseError {
                    loc: close.loc,
                    message: "lifetime set must not be empty".into(),
                });
            }
            out.push(Annotation {
                kind,
                target: target.text,
                lifetimes,
                loc: loc.clone(),
            });
            // Further `name,{...}` pairs are independent annotations.
            if self.consume(TokenKind::Comma) || self.check(TokenKind::Ident) {
                continue;
            }
            break;
        }
        self.expect(TokenKind::RParen, "')'")?;
        Ok(out)
    }

    // ---- functions ----------------------------------------------------

    fn parse_function(&mut self, annotations: Vec<Annotation>) -> PResult<Function> {
        let loc = self.expect(TokenKind::KwFn, "'fn'")?.loc;
        let name = self.expect_ident("a function name")?.text;
        self.expect(TokenKind::LParen, "'('")?;
        let mut params = Vec::new();
        let mut seen = HashSet::new();
        if !self.check(TokenKind::RParen) {
            loop {
                let pname = self.expect_ident("a parameter name")?;
                if !seen.insert(pname.text.clone()) {
                    return Err(ParseError {
                        loc: pname.loc,
                        message: format!("duplicate parameter '{}'", pname.text),
                    });
                }
                self.expect(TokenKind::Colon, "':'")?;
                let ty = self.parse_type()?;
                let by_ref = self.consume(TokenKind::Amp);
                params.push(Param {
                    name: pname.text,
                    class: ty,
                    by_ref,
                    loc: pname.loc,
                });
                if !self.consume(TokenKind::Comma) {
                    break;
                }
            }
        }
        self.expect(TokenKind::RParen, "')'")?;
        let return_class = if self.consume(TokenKind::Arrow) {
            Some(self.parse_type()?)
        } else {
            None
        };
        let body = self.parse_block()?;
        Ok(Function {
            name,
            params,
            return_class,
            annotations,
            body,
            loc,
        })
    }

    // ---- statements -----------------------------------------------------

    fn parse_block(&mut self) -> PResult<Block> {
        let loc = self.expect(TokenKind::LBrace, "'{'")?.loc;
        let mut stmts = Vec::new();
        while !self.check(TokenKind::RBrace) {
            if self.check(TokenKind::Eof) {
                return self.err("unterminated block");
            }
            stmts.push(self.parse_stmt()?);
        }
        let end_loc = self.expect(TokenKind::RBrace, "'}'")?.loc;
        Ok(Block {
            stmts,
            loc,
            end_loc,
        })
    }

    /// A branch body: either a braced block or a single statement.
    fn parse_branch_body(&mut self) -> PResult<Block> {
        if self.check(TokenKind::LBrace) {
            self.parse_block()
        } else {
            let stmt = self.parse_stmt()?;
            let loc = stmt.loc().clone();
            Ok(Block {
                stmts: vec![stmt],
                loc: loc.clone(),
                end_loc: loc,
            })
        }
    }

    fn parse_stmt(&mut self) -> PResult<Stmt> {
        let loc = self.loc();
        match self.kind() {
            TokenKind::KwLet => {
                self.advance();
                let var = self.expect_ident("a variable name")?.text;
                self.expect(TokenKind::Colon, "':'")?;
                let class = self.parse_type()?;
                self.expect(TokenKind::Semi, "';'")?;
                Ok(Stmt::Let { var, class, loc })
            }
            TokenKind::KwCreate => {
                self.advance();
                self.expect(TokenKind::LParen, "'('")?;
                let var = self.expect_ident("a variable name")?.text;
                self.expect(TokenKind::Comma, "','")?;
                let class = self.parse_type()?;
                self.expect(TokenKind::RParen, "')'")?;
                self.expect(TokenKind::Semi, "';'")?;
                Ok(Stmt::Create { var, class, loc })
            }
            TokenKind::KwDestroy => {
                self.advance();
                self.expect(TokenKind::LParen, "'('")?;
                let var = self.expect_ident("a variable name")?.text;
                self.expect(TokenKind::RParen, "')'")?;
                self.expect(TokenKind::Semi, "';'")?;
                Ok(Stmt::Destroy { var, loc })
            }
            TokenKind::KwDeallocate => {
                self.advance();
                self.expect(TokenKind::LParen, "'('")?;
                let arg = self.parse_expr()?;
                self.expect(TokenKind::RParen, "')'")?;
                self.expect(TokenKind::Semi, "';'")?;
                Ok(Stmt::Deallocate { arg, loc })
            }
            TokenKind::KwDelete => {
                self.advance();
                let arg = self.parse_expr()?;
                self.expect(TokenKind::Semi, "';'")?;
                Ok(Stmt::Delete { arg, loc })
            }
            TokenKind::KwIf => {
                self.advance();
                self.expect(TokenKind::LParen, "'('")?;
                let cond = self.parse_expr()?;
                self.expect(TokenKind::RParen, "')'")?;
                let then_block = self.parse_branch_body()?;
                let else_block = if self.consume(TokenKind::KwElse) {
                    Some(self.parse_branch_body()?)
                } else {
                    None
                };
                Ok(Stmt::If {
                    cond,
                    then_block,
                    else_block,
                    loc,
                })
            }
            TokenKind::KwWhile => {
                self.advance();
                self.expect(TokenKind::LParen, "'('")?;
                let cond = self.parse_expr()?;
                self.expect(TokenKind::RParen, "')'")?;
                let body = self.parse_branch_body()?;
                Ok(Stmt::While { cond, body, loc })
            }
            TokenKind::KwReturn => {
                self.advance();
                let value = if self.check(TokenKind::Semi) {
                    None
                } else {
                    Some(self.parse_expr()?)
                };
                self.expect(TokenKind::Semi, "';'")?;
                Ok(Stmt::Return { value, loc })
            }
            TokenKind::LBrace => Ok(Stmt::Block(self.parse_block()?)),
            TokenKind::LBracket => {
                // `[e] = e';`
                self.advance();
                let addr = self.parse_expr()?;
                self.expect(TokenKind::RBracket, "']'")?;
                self.expect(TokenKind::Assign, "'='")?;
                let value = self.parse_expr()?;
                self.expect(TokenKind::Semi, "';'")?;
                Ok(Stmt::Mutation { addr, value, loc })
            }
            TokenKind::Star => {
                // `*e = e';` is the same mutation written C-style.
                self.advance();
                let addr = self.parse_unary()?;
                self.expect(TokenKind::Assign, "'='")?;
                let value = self.parse_expr()?;
                self.expect(TokenKind::Semi, "';'")?;
                Ok(Stmt::Mutation { addr, value, loc })
            }
            TokenKind::Ident if self.peek_kind(1) == TokenKind::Assign => {
                let var = self.advance().text;
                self.advance(); // '='
                self.parse_assign_rhs(var, loc)
            }
            TokenKind::Ident
                if matches!(self.peek_kind(1), TokenKind::PlusEq | TokenKind::MinusEq) =>
            {
                let var = self.advance().text;
                let op = if self.advance().kind == TokenKind::PlusEq {
                    BinOpKind::Add
                } else {
                    BinOpKind::Sub
                };
                let value = self.parse_expr()?;
                self.expect(TokenKind::Semi, "';'")?;
                Ok(Stmt::CompoundAssign {
                    var,
                    op,
                    value,
                    loc,
                })
            }
            _ => {
                let expr = self.parse_expr()?;
                self.expect(TokenKind::Semi, "';'")?;
                if let Expr::Call { callee, args, loc } = expr {
                    Ok(Stmt::Call {
                        result: None,
                        callee,
                        args,
                        loc,
                    })
                } else {
                    Ok(Stmt::ExprStmt { expr, loc })
                }
            }
        }
    }

    fn parse_assign_rhs(&mut self, var: String, loc: SourceLoc) -> PResult<Stmt> {
        match self.kind() {
            TokenKind::KwAllocate => {
                self.advance();
                self.expect(TokenKind::LParen, "'('")?;
                let size = self.parse_expr()?;
                self.expect(TokenKind::RParen, "')'")?;
                self.expect(TokenKind::Semi, "';'")?;
                Ok(Stmt::Allocate { var, size, loc })
            }
            TokenKind::KwNew => {
                self.advance();
                self.expect(TokenKind::LParen, "'('")?;
                let size = self.parse_expr()?;
                self.expect(TokenKind::RParen, "')'")?;
                self.expect(TokenKind::Semi, "';'")?;
                Ok(Stmt::New { var, size, loc })
            }
            TokenKind::KwMove => {
                self.advance();
                let src = self.expect_ident("a variable name")?.text;
                self.expect(TokenKind::Semi, "';'")?;
                Ok(Stmt::Move {
                    dst: var,
                    src,
                    loc,
                })
            }
            TokenKind::LBracket => {
                self.advance();
                let addr = self.parse_expr()?;
                self.expect(TokenKind::RBracket, "']'")?;
                self.expect(TokenKind::Semi, "';'")?;
                Ok(Stmt::Lookup { var, addr, loc })
            }
            _ => {
                let value = self.parse_expr()?;
                self.expect(TokenKind::Semi, "';'")?;
                if let Expr::Call { callee, args, loc: cl } = value {
                    Ok(Stmt::Call {
                        result: Some(var),
                        callee,
                        args,
                        loc: cl,
                    })
                } else {
                    Ok(Stmt::Assign { var, value, loc })
                }
            }
        }
    }

    // ---- expressions ---------------------------------------------------

    fn parse_expr(&mut self) -> PResult<Expr> {
        self.parse_cmp()
    }

    fn parse_cmp(&mut self) -> PResult<Expr> {
        let mut lhs = self.parse_add()?;
        loop {
            let op = match self.kind() {
                TokenKind::EqEq => BinOpKind::Eq,
                TokenKind::NotEq => BinOpKind::Ne,
                TokenKind::Lt => BinOpKind::Lt,
                TokenKind::Le => BinOpKind::Le,
                TokenKind::Gt => BinOpKind::Gt,
                TokenKind::Ge => BinOpKind::Ge,
                _ => break,
            };
            let loc = self.advance().loc;
            let rhs = self.parse_add()?;
            lhs = Expr::BinOp {
                op,
                lhs: Box::new(lhs),
                rhs: Box::new(rhs),
                loc,
            };
        }
        Ok(lhs)
    }

    fn parse_add(&mut self) -> PResult<Expr> {
        let mut lhs = self.parse_mul()?;
        loop {
            let op = match self.kind() {
                TokenKind::Plus => BinOpKind::Add,
                TokenKind::Minus => BinOpKind::Sub,
                _ => break,
            };
            let loc = self.advance().loc;
            let rhs = self.parse_mul()?;
            lhs = Expr::BinOp {
                op,
                lhs: Box::new(lhs),
                rhs: Box::new(rhs),
                loc,
            };
        }
        Ok(lhs)
    }

    fn parse_mul(&mut self) -> PResult<Expr> {
        let mut lhs = self.parse_unary()?;
        loop {
            let op = match self.kind() {
                TokenKind::Star => BinOpKind::Mul,
                TokenKind::Slash => BinOpKind::Div,
                _ => break,
            };
            let loc = self.advance().loc;
            let rhs = self.parse_unary()?;
            lhs = Expr::BinOp {
                op,
                lhs: Box::new(lhs),
                rhs: Box::new(rhs),
                loc,
            };
        }
        Ok(lhs)
    }

    fn parse_unary(&mut self) -> PResult<Expr> {
        let loc = self.loc();
        match self.kind() {
            TokenKind::Star => {
                self.advance();
                let inner = self.parse_unary()?;
                Ok(Expr::Deref {
                    inner: Box::new(inner),
                    loc,
                })
            }
            TokenKind::Amp => {
                self.advance();
                let var = self.expect_ident("a variable name after '&'")?.text;
                Ok(Expr::AddressOf { var, loc })
            }
            TokenKind::KwMove => {
                self.advance();
                let var = self.expect_ident("a variable name after 'move'")?.text;
                Ok(Expr::MoveOf { var, loc })
            }
            TokenKind::PlusPlus | TokenKind::MinusMinus => {
                let op = if self.advance().kind == TokenKind::PlusPlus {
                    IncDecOp::Inc
                } else {
                    IncDecOp::Dec
                };
                let var = self.expect_ident("a variable name")?.text;
                Ok(Expr::IncDec {
                    op,
                    prefix: true,
                    var,
                    loc,
                })
            }
            TokenKind::Minus => {
                self.advance();
                let inner = self.parse_unary()?;
                if let Expr::IntLit { value, .. } = inner {
                    Ok(Expr::IntLit { value: -value, loc })
                } else {
                    Ok(Expr::BinOp {
                        op: BinOpKind::Sub,
                        lhs: Box::new(Expr::IntLit { value: 0, loc: loc.clone() }),
                        rhs: Box::new(inner),
                        loc,
                    })
                }
            }
            _ => self.parse_postfix(),
        }
    }

    fn parse_postfix(&mut self) -> PResult<Expr> {
        let mut expr = self.parse_primary()?;
        loop {
            match self.kind() {
                TokenKind::LBracket => {
                    let loc = self.advance().loc;
                    let index = self.parse_expr()?;
                    self.expect(TokenKind::RBracket, "']'")?;
                    expr = Expr::Index {
                        base: Box::new(expr),
                        index: Box::new(index),
                        loc,
                    };
                }
                TokenKind::PlusPlus | TokenKind::MinusMinus => {
                    let tok = self.advance();
                    let op = if tok.kind == TokenKind::PlusPlus {
                        IncDecOp::Inc
                    } else {
                        IncDecOp::Dec
                    };
                    let var = match &expr {
                        Expr::VarRef { name, .. } => name.clone(),
                        _ => {
                            return Err(ParseError {
                                loc: tok.loc,
                                message: format!(
                                    "'{}' may only be applied to a variable",
                                    tok.text
                                ),
                            })
                        }
                    };
                    expr = Expr::IncDec {
                        op,
                        prefix: false,
                        var,
                        loc: tok.loc,
                    };
                }
                _ => break,
            }
        }
        Ok(expr)
    }

    fn parse_primary(&mut self) -> PResult<Expr> {
        let loc = self.loc();
        match self.kind() {
            TokenKind::Int => {
                let tok = self.advance();
                match tok.text.parse::<i64>() {
                    Ok(value) => Ok(Expr::IntLit { value, loc }),
                    Err(_) => Err(ParseError {
                        loc,
                        message: format!("integer literal '{}' out of range", tok.text),
                    }),
                }
            }
            TokenKind::KwNull => {
                self.advance();
                Ok(Expr::NullLit { loc })
            }
            TokenKind::Ident => {
                let name = self.advance().text;
                if self.consume(TokenKind::LParen) {
                    let mut args = Vec::new();
                    if !self.check(TokenKind::RParen) {
                        loop {
                            args.push(self.parse_expr()?);
                            if !self.consume(TokenKind::Comma) {
                                break;
                            }
                        }
                    }
                    self.expect(TokenKind::RParen, "')'")?;
                    Ok(Expr::Call {
                        callee: name,
                        args,
                        loc,
                    })
                } else {
                    Ok(Expr::VarRef { name, loc })
                }
            }
            TokenKind::LParen => {
                self.advance();
                let expr = self.parse_expr()?;
                self.expect(TokenKind::RParen, "')'")?;
                Ok(expr)
            }
            _ => self.err(format!(
                "expected an expression, found '{}'",
                if self.check(TokenKind::Eof) {
                    "end of input"
                } else {
                    &self.current().text
                }
            )),
        }
    }

    // ---- top level -------------------------------------------------------

    fn parse_program(&mut self, file: Arc<str>, comments: Vec<Comment>) -> PResult<Program> {
        let mut globals = Vec::new();
        let mut functions = Vec::new();
        let mut pending: Vec<Annotation> = Vec::new();
        loop {
            match self.kind() {
                TokenKind::Eof => break,
                TokenKind::KwGlobal => {
                    if !pending.is_empty() {
                        return self.err("annotations must be followed by a function definition");
                    }
                    let loc = self.advance().loc;
                    let name = self.expect_ident("a global variable name")?.text;
                    self.expect(TokenKind::Colon, "':'")?;
                    let class = self.parse_type()?;
                    self.expect(TokenKind::Semi, "';'")?;
                    globals.push(GlobalDecl { name, class, loc });
                }
                TokenKind::KwPre => {
                    pending.extend(self.parse_annotation(AnnotationKind::Pre)?);
                }
                TokenKind::KwPost => {
                    pending.extend(self.parse_annotation(AnnotationKind::Post)?);
                }
                TokenKind::KwFn => {
                    let anns = std::mem::take(&mut pending);
                    functions.push(self.parse_function(anns)?);
                }
                _ => {
                    return self.err(format!(
                        "expected 'fn', 'global', 'pre' or 'post', found '{}'",
                        self.current().text
                    ))
                }
            }
        }
        if !pending.is_empty() {
            return self.err("annotations must be followed by a function definition");
        }
        Ok(Program {
            globals,
            functions,
            comments,
            file,
        })
    }
}

/// Parses a complete source file.
pub fn parse_program(source: &str, file_name: &str) -> PResult<Program> {
    let file: Arc<str> = Arc::from(file_name);
    let (tokens, comments) = tokenize(source, &file);
    let mut parser = Parser { tokens, pos: 0 };
    parser.parse_program(file, comments)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_function_with_precondition() {
        let src = "pre(z,{x,y}) fn f(x: Pointer, y: Pointer, z: Pointer) -> Pointer { return z; }";
        let prog = parse_program(src, "t.lt").unwrap();
        assert_eq!(prog.functions.len(), 1);
        let f = &prog.functions[0];
        assert_eq!(f.annotations.len(), 1);
        let ann = &f.annotations[0];
        assert_eq!(ann.kind, AnnotationKind::Pre);
        assert_eq!(ann.target, "z");
        assert_eq!(
            ann.lifetimes,
            vec![
                LifetimeToken::Param("x".into()),
                LifetimeToken::Param("y".into())
            ]
        );
    }

    #[test]
    fn parses_postcondition_with_null() {
        let src = "post(g,{x,null}) fn g(x: Pointer) -> Pointer { return x; }";
        let prog = parse_program(src, "t.lt").unwrap();
        let ann = &prog.functions[0].annotations[0];
        assert_eq!(ann.kind, AnnotationKind::Post);
        assert_eq!(
            ann.lifetimes,
            vec![LifetimeToken::Param("x".into()), LifetimeToken::Null]
        );
    }

    #[test]
    fn multiple_annotation_pairs_split() {
        let src = "pre(a,{x},b,{y}) fn f(x: Pointer, y: Pointer, a: Pointer, b: Pointer) {}";
        let prog = parse_program(src, "t.lt").unwrap();
        assert_eq!(prog.functions[0].annotations.len(), 2);
    }

    #[test]
    fn empty_source_parses_to_empty_program() {
        let prog = parse_program("", "t.lt").unwrap();
        assert!(prog.functions.is_empty());
        assert!(prog.globals.is_empty());
    }

    #[test]
    fn duplicate_parameter_rejected() {
        let err = parse_program("fn f(x: Pointer, x: Value) {}", "t.lt").unwrap_err();
        assert!(err.message.contains("duplicate parameter"));
    }

    #[test]
    fn parses_listing_style_if() {
        let src = "fn main() {
            create(x, Value);
            create(p, Pointer);
            if (x == 2) p = &x;
            else {
                create(y, Value);
                p = &y;
                destroy(y);
            }
            *p = 3;
        }";
        let prog = parse_program(src, "t.lt").unwrap();
        let body = &prog.functions[0].body;
        assert_eq!(body.stmts.len(), 4);
        assert!(matches!(body.stmts[3], Stmt::Mutation { .. }));
    }

    #[test]
    fn parses_pointer_arith_forms() {
        let src = "fn main() {
            let p: Pointer;
            let v: Value;
            let q: Pointer;
            let n: Value;
            q = p + v;
            p++;
            ++p;
            p -= v;
            n = p[v];
            n = v[p];
        }";
        let prog = parse_program(src, "t.lt").unwrap();
        assert_eq!(prog.functions[0].body.stmts.len(), 10);
    }

    #[test]
    fn parses_heap_sugar() {
        let src = "fn main() { let p: Pointer; p = new(4); delete p; }";
        let prog = parse_program(src, "t.lt").unwrap();
        let stmts = &prog.functions[0].body.stmts;
        assert!(matches!(stmts[1], Stmt::New { .. }));
        assert!(matches!(stmts[2], Stmt::Delete { .. }));
    }

    #[test]
    fn global_declarations() {
        let src = "global g: const Owner;\nglobal h: Owner;\nfn main() {}";
        let prog = parse_program(src, "t.lt").unwrap();
        assert_eq!(prog.globals.len(), 2);
        assert!(prog.globals[0].class.class().is_const);
        assert!(!prog.globals[1].class.class().is_const);
    }

    #[test]
    fn garbage_yields_error_not_panic() {
        assert!(parse_program("@@@@", "t.lt").is_err());
        assert!(parse_program("fn", "t.lt").is_err());
        assert!(parse_program("fn f( {", "t.lt").is_err());
    }
}
