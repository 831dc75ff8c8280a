//! Per-function control flow graphs of single-instruction nodes.

use crate::ast::TypeClass;
use crate::loc::SourceLoc;
use std::collections::BTreeSet;
use std::fmt;

pub type NodeId = usize;

/// A flattened operand: a named variable (or generated temporary), an
/// integer literal, or the null literal.
#[derive(Clone, PartialEq, Eq, Debug)]
pub enum Operand {
    Var(String),
    Const(i64),
    Null,
}

impl fmt::Display for Operand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Operand::Var(v) => write!(f, "{}", v),
            Operand::Const(c) => write!(f, "{}", c),
            Operand::Null => write!(f, "null"),
        }
    }
}

/// Arithmetic and comparison operators surviving flattening, plus
/// indexing (which is only reachable through rejected pointer arithmetic
/// or value-typed indexing; it computes an unknown value).
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum ComputeOp {
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
    Index,
}

impl ComputeOp {
    pub fn symbol(&self) -> &'static str {
        match self {
            ComputeOp::Add => "+",
            ComputeOp::Sub => "-",
            ComputeOp::Mul => "*",
            ComputeOp::Div => "/",
            ComputeOp::Eq => "==",
            ComputeOp::Ne => "!=",
            ComputeOp::Lt => "<",
            ComputeOp::Le => "<=",
            ComputeOp::Gt => ">",
            ComputeOp::Ge => ">=",
            ComputeOp::Index => "[]",
        }
    }
}

/// A single primitive instruction. All operands are identifiers or
/// literals; nested expressions were flattened into temporaries.
#[derive(Clone, PartialEq, Debug)]
pub enum Instr {
    Create {
        var: String,
        class: TypeClass,
    },
    Destroy {
        var: String,
    },
    /// `dst = allocate(size)`; `site` is the synthetic owner naming this
    /// allocation site.
    AllocAssign {
        dst: String,
        size: Operand,
        site: String,
    },
    Dealloc {
        ptr: String,
    },
    Copy {
        dst: String,
        src: Operand,
    },
    MoveAssign {
        dst: String,
        src: String,
    },
    TakeAddress {
        dst: String,
        var: String,
    },
    DerefRead {
        dst: String,
        ptr: String,
    },
    DerefWrite {
        ptr: String,
        src: Operand,
    },
    Compute {
        dst: String,
        op: ComputeOp,
        lhs: Operand,
        rhs: Operand,
    },
    /// A non-const use of an Owner; invalidates pointers into it.
    OwnerUse {
        owner: String,
        is_const: bool,
    },
    Call {
        result: Option<String>,
        callee: String,
        args: Vec<String>,
    },
    Return {
        value: Option<String>,
    },
    /// No memory effect. Carries the branch condition when the node has
    /// two successors (true edge first).
    Nop {
        cond: Option<Operand>,
    },
}

/// Discriminant used by the generator's coverage counter.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Debug)]
pub enum InstrKind {
    Create,
    Destroy,
    AllocAssign,
    Dealloc,
    Copy,
    MoveAssign,
    TakeAddress,
    DerefRead,
    DerefWrite,
    Compute,
    OwnerUse,
    Call,
    Return,
    Nop,
}

impl InstrKind {
    pub const ALL: [InstrKind; 14] = [
        InstrKind::Create,
        InstrKind::Destroy,
        InstrKind::AllocAssign,
        InstrKind::Dealloc,
        InstrKind::Copy,
        InstrKind::MoveAssign,
        InstrKind::TakeAddress,
        InstrKind::DerefRead,
        InstrKind::DerefWrite,
        InstrKind::Compute,
        InstrKind::OwnerUse,
        InstrKind::Call,
        InstrKind::Return,
        InstrKind::Nop,
    ];
}

impl Instr {
    pub fn kind(&self) -> InstrKind {
        match self {
            Instr::Create { .. } => InstrKind::Create,
            Instr::Destroy { .. } => InstrKind::Destroy,
            Instr::AllocAssign { .. } => InstrKind::AllocAssign,
            Instr::Dealloc { .. } => InstrKind::Dealloc,
            Instr::Copy { .. } => InstrKind::Copy,
            Instr::MoveAssign { .. } => InstrKind::MoveAssign,
            Instr::TakeAddress { .. } => InstrKind::TakeAddress,
            Instr::DerefRead { .. } => InstrKind::DerefRead,
            Instr::DerefWrite { .. } => InstrKind::DerefWrite,
            Instr::Compute { .. } => InstrKind::Compute,
            Instr::OwnerUse { .. } => InstrKind::OwnerUse,
            Instr::Call { .. } => InstrKind::Call,
            Instr::Return { .. } => InstrKind::Return,
            Instr::Nop { .. } => InstrKind::Nop,
        }
    }
}

impl fmt::Display for Instr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Instr::Create { var, class } => write!(f, "create({}, {})", var, class),
            Instr::Destroy { var } => write!(f, "destroy({})", var),
            Instr::AllocAssign { dst, size, .. } => write!(f, "{} = allocate({})", dst, size),
            Instr::Dealloc { ptr } => write!(f, "deallocate({})", ptr),
            Instr::Copy { dst, src } => write!(f, "{} = {}", dst, src),
            Instr::MoveAssign { dst, src } => write!(f, "{} = move {}", dst, src),
            Instr::TakeAddress { dst, var } => write!(f, "{} = &{}", dst, var),
            Instr::DerefRead { dst, ptr } => write!(f, "{} = *{}", dst, ptr),
            Instr::DerefWrite { ptr, src } => write!(f, "*{} = {}", ptr, src),
            Instr::Compute { dst, op, lhs, rhs } => {
                if *op == ComputeOp::Index {
                    write!(f, "{} = {}[{}]", dst, lhs, rhs)
                } else {
                    write!(f, "{} = {} {} {}", dst, lhs, op.symbol(), rhs)
                }
            }
            Instr::OwnerUse { owner, is_const } => {
                if *is_const {
                    write!(f, "owner_use(const {})", owner)
                } else {
                    write!(f, "owner_use({})", owner)
                }
            }
            Instr::Call {
                result,
                callee,
                args,
            } => {
                if let Some(r) = result {
                    write!(f, "{} = {}({})", r, callee, args.join(", "))
                } else {
                    write!(f, "{}({})", callee, args.join(", "))
                }
            }
            Instr::Return { value } => match value {
                Some(v) => write!(f, "return {}", v),
                None => write!(f, "return"),
            },
            Instr::Nop { cond } => match cond {
                Some(c) => write!(f, "branch {}", c),
                None => write!(f, "nop"),
            },
        }
    }
}

#[derive(Clone, Debug)]
pub struct Node {
    pub instr: Instr,
    pub loc: SourceLoc,
    /// Ordered successors; for branch nodes the true edge comes first.
    pub succs: Vec<NodeId>,
}

#[derive(Clone, Debug)]
pub struct Cfg {
    pub nodes: Vec<Node>,
    pub entry: NodeId,
    pub exits: BTreeSet<NodeId>,
}

impl Cfg {
    pub fn preds(&self, id: NodeId) -> Vec<NodeId> {
        let mut out = Vec::new();
        for (i, node) in self.nodes.iter().enumerate() {
            if node.succs.contains(&id) {
                out.push(i);
            }
        }
        out
    }

    /// True when no back edges exist (every edge goes to a later node in
    /// reverse-postorder).
    pub fn is_loop_free(&self) -> bool {
        // DFS with colors: an edge to a gray node is a back edge.
        #[derive(Clone, Copy, PartialEq)]
        enum Color {
            White,
            Gray,
            Black,
        }
        let mut color = vec![Color::White; self.nodes.len()];
        let mut stack = vec![(self.entry, 0usize)];
        color[self.entry] = Color::Gray;
        while let Some(&mut (node, ref mut idx)) = stack.last_mut() {
            if *idx < self.nodes[node].succs.len() {
                let next = self.nodes[node].succs[*idx];
                *idx += 1;
                match color[next] {
                    Color::Gray => return false,
                    Color::White => {
                        color[next] = Color::Gray;
                        stack.push((next, 0));
                    }
                    Color::Black => {}
                }
            } else {
                color[node] = Color::Black;
                stack.pop();
            }
        }
        true
    }

    /// Emits the graph in DOT format (used by `--dump-cfg`).
    pub fn to_dot(&self, name: &str) -> String {
        use std::fmt::Write;
        let mut out = String::new();
        let _ = writeln!(out, "digraph \"{}\" {{", name);
        let _ = writeln!(out, "  node [shape=box, fontname=monospace];");
        for (i, node) in self.nodes.iter().enumerate() {
            let label = format!("{}: {}", i, node.instr)
                .replace('\\', "\\\\")
                .replace('"', "\\\"");
            let _ = writeln!(
                out,
                "  n{} [label=\"{} @{}:{}\"];",
                i, label, node.loc.line, node.loc.column
            );
        }
        for (i, node) in self.nodes.iter().enumerate() {
            let branch = node.succs.len() == 2;
            for (k, succ) in node.succs.iter().enumerate() {
                if branch {
                    let lbl = if k == 0 { "T" } else { "F" };
                    let _ = writeln!(out, "  n{} -> n{} [label=\"{}\"];", i, succ, lbl);
                } else {
                    let _ = writeln!(out, "  n{} -> n{};", i, succ);
                }
            }
        }
        out.push_str("}\n");
        out
    }
}
