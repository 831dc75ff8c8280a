//! Abstract syntax for the lifecheck mini-language.
//!
//! The language is a small C-like imperative language whose only types are
//! the three memory classes `Owner`, `Pointer` and `Value` (plus names that
//! resolve to one of those through a type-facts file). Memory is manipulated
//! through explicit `create`/`destroy`/`allocate`/`deallocate` instructions
//! and the bracket forms `v = [e]` (lookup) and `[e] = e'` (mutation).

use crate::loc::SourceLoc;
use std::fmt;

/// The three memory classes a variable can belong to.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, PartialOrd, Ord)]
pub enum TypeKind {
    Owner,
    Pointer,
    Value,
}

impl fmt::Display for TypeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TypeKind::Owner => write!(f, "Owner"),
            TypeKind::Pointer => write!(f, "Pointer"),
            TypeKind::Value => write!(f, "Value"),
        }
    }
}

/// A memory class together with constness.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct TypeClass {
    pub kind: TypeKind,
    pub is_const: bool,
}

impl TypeClass {
    pub fn new(kind: TypeKind) -> Self {
        TypeClass {
            kind,
            is_const: false,
        }
    }

    pub fn constant(kind: TypeKind) -> Self {
        TypeClass {
            kind,
            is_const: true,
        }
    }

    pub fn owner() -> Self {
        Self::new(TypeKind::Owner)
    }

    pub fn pointer() -> Self {
        Self::new(TypeKind::Pointer)
    }

    pub fn value() -> Self {
        Self::new(TypeKind::Value)
    }
}

impl fmt::Display for TypeClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_const {
            write!(f, "const ")?;
        }
        write!(f, "{}", self.kind)
    }
}

/// A type as written in the source: one of the three classes, or a name
/// that resolves to a class through the type-facts file.
#[derive(Clone, Debug)]
pub enum TypeRef {
    Class(TypeClass),
    Named {
        name: String,
        is_const: bool,
        loc: SourceLoc,
    },
}

impl TypeRef {
    /// The resolved class. The pipeline resolves all named types before
    /// normalization; reaching a `Named` here is a pipeline bug.
    pub fn class(&self) -> TypeClass {
        match self {
            TypeRef::Class(c) => *c,
            TypeRef::Named { name, .. } => panic!("unresolved type name '{}'", name),
        }
    }
}

impl fmt::Display for TypeRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TypeRef::Class(c) => write!(f, "{}", c),
            TypeRef::Named { name, is_const, .. } => {
                if *is_const {
                    write!(f, "const ")?;
                }
                write!(f, "{}", name)
            }
        }
    }
}

/// An element of a `pre`/`post` annotation's lifetime set.
#[derive(Clone, PartialEq, Eq, Hash, Debug, PartialOrd, Ord)]
pub enum LifetimeToken {
    /// Names a parameter of the annotated function.
    Param(String),
    Null,
    Global,
    Invalid,
}

impl fmt::Display for LifetimeToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LifetimeToken::Param(name) => write!(f, "{}", name),
            LifetimeToken::Null => write!(f, "null"),
            LifetimeToken::Global => write!(f, "global"),
            LifetimeToken::Invalid => write!(f, "invalid"),
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum AnnotationKind {
    Pre,
    Post,
}

/// A lifetime pre- or postcondition attached to a function.
///
/// `pre(p, {x, y})` constrains parameter `p`; `post(f, {x, null})`
/// constrains the value returned by `f`.
#[derive(Clone, Debug)]
pub struct Annotation {
    pub kind: AnnotationKind,
    pub target: String,
    pub lifetimes: Vec<LifetimeToken>,
    pub loc: SourceLoc,
}

/// A function parameter. `by_ref` parameters alias the caller's variable.
#[derive(Clone, Debug)]
pub struct Param {
    pub name: String,
    pub class: TypeRef,
    pub by_ref: bool,
    pub loc: SourceLoc,
}

#[derive(Clone, Debug)]
pub struct Function {
    pub name: String,
    pub params: Vec<Param>,
    pub return_class: Option<TypeRef>,
    pub annotations: Vec<Annotation>,
    pub body: Block,
    pub loc: SourceLoc,
}

impl Function {
    pub fn param(&self, name: &str) -> Option<&Param> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn pre_for(&self, param: &str) -> Option<&Annotation> {
        self.annotations
            .iter()
            .find(|a| a.kind == AnnotationKind::Pre && a.target == param)
    }

    pub fn post(&self) -> Option<&Annotation> {
        self.annotations
            .iter()
            .find(|a| a.kind == AnnotationKind::Post)
    }

    pub fn has_pre(&self) -> bool {
        self.annotations
            .iter()
            .any(|a| a.kind == AnnotationKind::Pre)
    }
}

/// A module-level variable declaration.
#[derive(Clone, Debug)]
pub struct GlobalDecl {
    pub name: String,
    pub class: TypeRef,
    pub loc: SourceLoc,
}

#[derive(Clone, Debug)]
pub struct Block {
    pub stmts: Vec<Stmt>,
    pub loc: SourceLoc,
    /// Location of the closing brace; scope-exit destroys anchor here.
    pub end_loc: SourceLoc,
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub enum BinOpKind {
    Add,
    Sub,
    Mul,
    Div,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl BinOpKind {
    pub fn symbol(&self) -> &'static str {
        match self {
            BinOpKind::Add => "+",
            BinOpKind::Sub => "-",
            BinOpKind::Mul => "*",
            BinOpKind::Div => "/",
            BinOpKind::Eq => "==",
            BinOpKind::Ne => "!=",
            BinOpKind::Lt => "<",
            BinOpKind::Le => "<=",
            BinOpKind::Gt => ">",
            BinOpKind::Ge => ">=",
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum IncDecOp {
    Inc,
    Dec,
}

#[derive(Clone, Debug)]
pub enum Expr {
    VarRef {
        name: String,
        loc: SourceLoc,
    },
    IntLit {
        value: i64,
        loc: SourceLoc,
    },
    NullLit {
        loc: SourceLoc,
    },
    /// `&x`; the operand is restricted to an identifier.
    AddressOf {
        var: String,
        loc: SourceLoc,
    },
    /// `*e`
    Deref {
        inner: Box<Expr>,
        loc: SourceLoc,
    },
    /// `move x`
    MoveOf {
        var: String,
        loc: SourceLoc,
    },
    BinOp {
        op: BinOpKind,
        lhs: Box<Expr>,
        rhs: Box<Expr>,
        loc: SourceLoc,
    },
    /// `p++`, `--p`, ...
    IncDec {
        op: IncDecOp,
        prefix: bool,
        var: String,
        loc: SourceLoc,
    },
    /// `e[e']`
    Index {
        base: Box<Expr>,
        index: Box<Expr>,
        loc: SourceLoc,
    },
    Call {
        callee: String,
        args: Vec<Expr>,
        loc: SourceLoc,
    },
}

impl Expr {
    pub fn loc(&self) -> &SourceLoc {
        match self {
            Expr::VarRef { loc, .. }
            | Expr::IntLit { loc, .. }
            | Expr::NullLit { loc }
            | Expr::AddressOf { loc, .. }
            | Expr::Deref { loc, .. }
            | Expr::MoveOf { loc, .. }
            | Expr::BinOp { loc, .. }
            | Expr::IncDec { loc, .. }
            | Expr::Index { loc, .. }
            | Expr::Call { loc, .. } => loc,
        }
    }
}

#[derive(Clone, Debug)]
pub enum Stmt {
    /// `let x: T;` — sugar, expanded to create/destroy by the normalizer.
    Let {
        var: String,
        class: TypeRef,
        loc: SourceLoc,
    },
    Create {
        var: String,
        class: TypeRef,
        loc: SourceLoc,
    },
    Destroy {
        var: String,
        loc: SourceLoc,
    },
    /// `x = allocate(e);`
    Allocate {
        var: String,
        size: Expr,
        loc: SourceLoc,
    },
    /// `deallocate(e);`
    Deallocate {
        arg: Expr,
        loc: SourceLoc,
    },
    /// `p = new(e);` — desugars to a fresh synthetic global owner.
    New {
        var: String,
        size: Expr,
        loc: SourceLoc,
    },
    /// `delete e;`
    Delete {
        arg: Expr,
        loc: SourceLoc,
    },
    /// `v = [e];`
    Lookup {
        var: String,
        addr: Expr,
        loc: SourceLoc,
    },
    /// `[e] = e';` (also written `*e = e';`)
    Mutation {
        addr: Expr,
        value: Expr,
        loc: SourceLoc,
    },
    Assign {
        var: String,
        value: Expr,
        loc: SourceLoc,
    },
    /// `v = move u;`
    Move {
        dst: String,
        src: String,
        loc: SourceLoc,
    },
    /// `p += e;` / `p -= e;`
    CompoundAssign {
        var: String,
        op: BinOpKind,
        value: Expr,
        loc: SourceLoc,
    },
    If {
        cond: Expr,
        then_block: Block,
        else_block: Option<Block>,
        loc: SourceLoc,
    },
    While {
        cond: Expr,
        body: Block,
        loc: SourceLoc,
    },
    Call {
        result: Option<String>,
        callee: String,
        args: Vec<Expr>,
        loc: SourceLoc,
    },
    Return {
        value: Option<Expr>,
        loc: SourceLoc,
    },
    Block(Block),
    /// Bare expression statement, e.g. `p++;`.
    ExprStmt {
        expr: Expr,
        loc: SourceLoc,
    },
}

impl Stmt {
    pub fn loc(&self) -> &SourceLoc {
        match self {
            Stmt::Let { loc, .. }
            | Stmt::Create { loc, .. }
            | Stmt::Destroy { loc, .. }
            | Stmt::Allocate { loc, .. }
            | Stmt::Deallocate { loc, .. }
            | Stmt::New { loc, .. }
            | Stmt::Delete { loc, .. }
            | Stmt::Lookup { loc, .. }
            | Stmt::Mutation { loc, .. }
            | Stmt::Assign { loc, .. }
            | Stmt::Move { loc, .. }
            | Stmt::CompoundAssign { loc, .. }
            | Stmt::If { loc, .. }
            | Stmt::While { loc, .. }
            | Stmt::Call { loc, .. }
            | Stmt::Return { loc, .. }
            | Stmt::ExprStmt { loc, .. } => loc,
            Stmt::Block(b) => &b.loc,
        }
    }
}

/// A line comment kept for the corpus harness.
#[derive(Clone, Debug)]
pub struct Comment {
    pub line: u32,
    pub text: String,
}

#[derive(Clone, Debug)]
pub struct Program {
    pub globals: Vec<GlobalDecl>,
    pub functions: Vec<Function>,
    pub comments: Vec<Comment>,
    pub file: std::sync::Arc<str>,
}

impl Program {
    pub fn function(&self, name: &str) -> Option<&Function> {
        self.functions.iter().find(|f| f.name == name)
    }

    pub fn global(&self, name: &str) -> Option<&GlobalDecl> {
        self.globals.iter().find(|g| g.name == name)
    }
}
