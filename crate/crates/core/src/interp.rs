//! Concrete small-step interpreter over normalized CFGs.
//!
//! The machine state is a store (variable to address, per call frame plus
//! globals), a memory (address to value) and an allocation-block table.
//! Lookup, mutation and deallocation of dead or malformed addresses reach
//! the error configuration, which is the ground truth the static checker
//! is tested against.

use crate::ast::{TypeClass, TypeKind};
use crate::cfg::{ComputeOp, Instr, NodeId, Operand};
use crate::loc::SourceLoc;
use crate::normalize::NormProgram;
use std::collections::BTreeMap;

pub type Address = u64;

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum ConcreteValue {
    Integer(i64),
    NullAtom,
    Address(Address),
}

impl std::fmt::Display for ConcreteValue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ConcreteValue::Integer(n) => write!(f, "{}", n),
            ConcreteValue::NullAtom => write!(f, "null"),
            ConcreteValue::Address(a) => write!(f, "@{}", a),
        }
    }
}

/// Shared memory state: cells, allocation table, global store, and the
/// fresh-address counter. Addresses are never reused.
#[derive(Clone, Debug, Default)]
pub struct ConcreteState {
    pub memory: BTreeMap<Address, ConcreteValue>,
    /// First address of each live block, mapped to its length.
    pub blocks: BTreeMap<Address, u64>,
    pub globals: BTreeMap<String, Address>,
    next: Address,
}

impl ConcreteState {
    fn fresh(&mut self) -> Address {
        self.next += 1;
        self.next
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum ErrorReason {
    /// `v = [e]` with `val(e)` outside live memory.
    LookupDead,
    /// `[e] = e'` with `val(e)` outside live memory.
    MutationDead,
    /// Deallocation of a live address that is not the first address of a
    /// block.
    DeallocateNotFirst,
    /// Deallocation of a dead or non-address value.
    DeallocateDead,
    BadAllocSize,
    UnboundVariable,
    UnknownFunction,
    ArityMismatch,
}

impl ErrorReason {
    /// The deref/dealloc error class the static rules must cover.
    pub fn is_memory_error(&self) -> bool {
        matches!(
            self,
            ErrorReason::LookupDead
                | ErrorReason::MutationDead
                | ErrorReason::DeallocateNotFirst
                | ErrorReason::DeallocateDead
        )
    }
}

#[derive(Clone, Debug)]
pub struct ErrorConfig {
    pub loc: SourceLoc,
    pub reason: ErrorReason,
    pub message: String,
    /// Statement location of every active frame, innermost last; an
    /// intraprocedural checker may blame any of them.
    pub stack: Vec<SourceLoc>,
}

#[derive(Clone, Debug)]
struct Frame {
    func: usize,
    node: NodeId,
    store: BTreeMap<String, Address>,
    /// Caller variable receiving our return value.
    result_var: Option<String>,
}

/// A running machine: the nonterminal configuration.
#[derive(Clone, Debug)]
pub struct Machine<'p> {
    prog: &'p NormProgram,
    frames: Vec<Frame>,
    pub state: ConcreteState,
}

/// One transition's result.
pub enum Stepped<'p> {
    Continue(Machine<'p>),
    /// The machine sits at a branch whose condition value is not a
    /// concrete integer; the driver resolves it.
    NeedsChoice(Machine<'p>),
    Terminal(ConcreteState),
    Error(ErrorConfig),
}

#[derive(Clone, Debug)]
pub enum RunOutcome {
    Terminal(ConcreteState),
    Error(ErrorConfig),
    LimitExceeded,
}

impl RunOutcome {
    pub fn error(&self) -> Option<&ErrorConfig> {
        match self {
            RunOutcome::Error(e) => Some(e),
            _ => None,
        }
    }
}

impl<'p> Machine<'p> {
    /// Sets up globals and a frame for a parameterless entry function.
    pub fn new(prog: &'p NormProgram, entry: &str) -> Result<Machine<'p>, ErrorConfig> {
        let mut state = ConcreteState::default();
        for (name, class) in &prog.globals {
            let addr = create_cell(&mut state, *class);
            state.globals.insert(name.clone(), addr);
        }
        let (idx, func) = prog
            .functions
            .iter()
            .enumerate()
            .find(|(_, f)| f.name == entry)
            .ok_or_else(|| ErrorConfig {
                loc: SourceLoc::synthetic(&prog.file),
                reason: ErrorReason::UnknownFunction,
                message: format!("entry function '{}' is not defined", entry),
                stack: Vec::new(),
            })?;
        if !func.params.is_empty() {
            return Err(ErrorConfig {
                loc: func.loc.clone(),
                reason: ErrorReason::ArityMismatch,
                message: format!("entry function '{}' must take no parameters", entry),
                stack: Vec::new(),
            });
        }
        Ok(Machine {
            prog,
            frames: vec![Frame {
                func: idx,
                node: func.cfg.entry,
                store: BTreeMap::new(),
                result_var: None,
            }],
            state,
        })
    }

    pub fn current_instr(&self) -> (&'p Instr, &'p SourceLoc) {
        let frame = self.frames.last().expect("machine has a frame");
        let node = &self.prog.functions[frame.func].cfg.nodes[frame.node];
        (&node.instr, &node.loc)
    }

    pub fn describe_position(&self) -> String {
        let frame = self.frames.last().expect("machine has a frame");
        let func = &self.prog.functions[frame.func];
        let node = &func.cfg.nodes[frame.node];
        format!(
            "{}:{} [{}] @{}:{}",
            func.name, frame.node, node.instr, node.loc.line, node.loc.column
        )
    }

    fn stack_locs(&self) -> Vec<SourceLoc> {
        self.frames
            .iter()
            .map(|f| self.prog.functions[f.func].cfg.nodes[f.node].loc.clone())
            .collect()
    }

    fn error(&self, loc: &SourceLoc, reason: ErrorReason, message: impl Into<String>) -> ErrorConfig {
        ErrorConfig {
            loc: loc.clone(),
            reason,
            message: message.into(),
            stack: self.stack_locs(),
        }
    }

    fn addr_of(&self, var: &str) -> Option<Address> {
        let frame = self.frames.last().expect("machine has a frame");
        frame
            .store
            .get(var)
            .or_else(|| self.state.globals.get(var))
            .copied()
    }

    fn read_var(&self, var: &str, loc: &SourceLoc) -> Result<ConcreteValue, ErrorConfig> {
        let addr = self.addr_of(var).ok_or_else(|| {
            self.error(
                loc,
                ErrorReason::UnboundVariable,
                format!("variable '{}' is not bound", var),
            )
        })?;
        self.state.memory.get(&addr).copied().ok_or_else(|| {
            self.error(
                loc,
                ErrorReason::UnboundVariable,
                format!("cell of variable '{}' is gone", var),
            )
        })
    }

    fn eval(&self, op: &Operand, loc: &SourceLoc) -> Result<ConcreteValue, ErrorConfig> {
        match op {
            Operand::Var(v) => self.read_var(v, loc),
            Operand::Const(n) => Ok(ConcreteValue::Integer(*n)),
            Operand::Null => Ok(ConcreteValue::NullAtom),
        }
    }

    fn class_of(&self, var: &str) -> Option<TypeClass> {
        let frame = self.frames.last().expect("machine has a frame");
        let func = &self.prog.functions[frame.func];
        if frame.store.contains_key(var) {
            return func.var_classes.get(var).copied();
        }
        self.prog
            .globals
            .get(var)
            .copied()
            .or_else(|| func.var_classes.get(var).copied())
    }

    fn free_block(state: &mut ConcreteState, head: Address) {
        if let Some(len) = state.blocks.remove(&head) {
            for a in head..head + len {
                state.memory.remove(&a);
            }
        }
    }

    /// Writes a value into a variable's cell. Owners deallocate the block
    /// they currently hold before taking a new value.
    fn write_var(&mut self, var: &str, value: ConcreteValue, loc: &SourceLoc) -> Result<(), ErrorConfig> {
        let addr = self.addr_of(var).ok_or_else(|| {
            self.error(
                loc,
                ErrorReason::UnboundVariable,
                format!("variable '{}' is not bound", var),
            )
        })?;
        if self.class_of(var).map(|c| c.kind) == Some(TypeKind::Owner) {
            if let Some(ConcreteValue::Address(old)) = self.state.memory.get(&addr).copied() {
                if self.state.blocks.contains_key(&old) && value != ConcreteValue::Address(old) {
                    Self::free_block(&mut self.state, old);
                }
            }
        }
        self.state.memory.insert(addr, value);
        Ok(())
    }

    fn advance(mut self) -> Stepped<'p> {
        let frame = self.frames.last_mut().expect("machine has a frame");
        let func = &self.prog.functions[frame.func];
        let succs = &func.cfg.nodes[frame.node].succs;
        debug_assert_eq!(succs.len(), 1, "advance expects a single successor");
        frame.node = succs[0];
        Stepped::Continue(self)
    }

    /// Resolves a pending branch with the given truth value.
    pub fn take_branch(mut self, value: bool) -> Machine<'p> {
        let frame = self.frames.last_mut().expect("machine has a frame");
        let func = &self.prog.functions[frame.func];
        let succs = &func.cfg.nodes[frame.node].succs;
        debug_assert_eq!(succs.len(), 2, "branch nodes have two successors");
        frame.node = if value { succs[0] } else { succs[1] };
        self
    }

    /// Key identifying the syntactic branch the machine is stopped at.
    pub fn branch_key(&self) -> (usize, NodeId) {
        let frame = self.frames.last().expect("machine has a frame");
        (frame.func, frame.node)
    }

    /// Executes the current instruction.
    pub fn step(mut self) -> Stepped<'p> {
        let (instr, loc) = {
            let (i, l) = self.current_instr();
            (i.clone(), l.clone())
        };
        macro_rules! fail {
            ($reason:expr, $msg:expr) => {
                return Stepped::Error(self.error(&loc, $reason, $msg))
            };
        }
        macro_rules! get {
            ($e:expr) => {
                match $e {
                    Ok(v) => v,
                    Err(e) => return Stepped::Error(e),
                }
            };
        }
        match &instr {
            Instr::Create { var, class } => {
                let addr = create_cell(&mut self.state, *class);
                self.frames
                    .last_mut()
                    .expect("machine has a frame")
                    .store
                    .insert(var.clone(), addr);
                self.advance()
            }
            Instr::Destroy { var } => {
                let frame = self.frames.last_mut().expect("machine has a frame");
                let addr = match frame.store.remove(var) {
                    Some(a) => Some(a),
                    None => self.state.globals.remove(var),
                };
                match addr {
                    Some(a) => {
                        self.state.memory.remove(&a);
                        self.advance()
                    }
                    None => fail!(
                        ErrorReason::UnboundVariable,
                        format!("destroy of unbound variable '{}'", var)
                    ),
                }
            }
            Instr::AllocAssign { dst, size, .. } => {
                let n = match get!(self.eval(size, &loc)) {
                    ConcreteValue::Integer(n) if n >= 1 && n <= (1 << 20) => n as u64,
                    other => fail!(
                        ErrorReason::BadAllocSize,
                        format!("allocate of invalid size {}", other)
                    ),
                };
                let head = self.state.fresh();
                self.state.next += n - 1; // claim the consecutive range
                for a in head..head + n {
                    self.state.memory.insert(a, ConcreteValue::NullAtom);
                }
                self.state.blocks.insert(head, n);
                get!(self.write_var(dst, ConcreteValue::Address(head), &loc));
                self.advance()
            }
            Instr::Dealloc { ptr } => {
                let val = get!(self.read_var(ptr, &loc));
                match val {
                    ConcreteValue::Address(a) => {
                        if self.state.blocks.contains_key(&a) {
                            Self::free_block(&mut self.state, a);
                            self.advance()
                        } else if self.state.memory.contains_key(&a) {
                            fail!(
                                ErrorReason::DeallocateNotFirst,
                                format!("deallocate of @{}, which is not the first address of a block", a)
                            )
                        } else {
                            fail!(
                                ErrorReason::DeallocateDead,
                                format!("deallocate of dead address @{}", a)
                            )
                        }
                    }
                    other => fail!(
                        ErrorReason::DeallocateDead,
                        format!("deallocate of non-address value {}", other)
                    ),
                }
            }
            Instr::Copy { dst, src } => {
                let val = get!(self.eval(src, &loc));
                get!(self.write_var(dst, val, &loc));
                self.advance()
            }
            Instr::MoveAssign { dst, src } => {
                let val = get!(self.read_var(src, &loc));
                get!(self.write_var(dst, val, &loc));
                get!(self.write_var_raw(src, ConcreteValue::NullAtom, &loc));
                self.advance()
            }
            Instr::TakeAddress { dst, var } => {
                let addr = match self.addr_of(var) {
                    Some(a) => a,
                    None => fail!(
                        ErrorReason::UnboundVariable,
                        format!("address of unbound variable '{}'", var)
                    ),
                };
                get!(self.write_var(dst, ConcreteValue::Address(addr), &loc));
                self.advance()
            }
            Instr::DerefRead { dst, ptr } => {
                let target = get!(self.read_var(ptr, &loc));
                let value = match target {
                    ConcreteValue::Address(a) => match self.state.memory.get(&a) {
                        Some(v) => *v,
                        None => fail!(
                            ErrorReason::LookupDead,
                            format!("lookup through '{}' of dead address @{}", ptr, a)
                        ),
                    },
                    other => fail!(
                        ErrorReason::LookupDead,
                        format!("lookup through '{}' of non-address value {}", ptr, other)
                    ),
                };
                get!(self.write_var(dst, value, &loc));
                self.advance()
            }
            Instr::DerefWrite { ptr, src } => {
                let target = get!(self.read_var(ptr, &loc));
                let value = get!(self.eval(src, &loc));
                match target {
                    ConcreteValue::Address(a) if self.state.memory.contains_key(&a) => {
                        self.state.memory.insert(a, value);
                        self.advance()
                    }
                    ConcreteValue::Address(a) => fail!(
                        ErrorReason::MutationDead,
                        format!("mutation through '{}' of dead address @{}", ptr, a)
                    ),
                    other => fail!(
                        ErrorReason::MutationDead,
                        format!("mutation through '{}' of non-address value {}", ptr, other)
                    ),
                }
            }
            Instr::Compute { dst, op, lhs, rhs } => {
                let l = get!(self.eval(lhs, &loc));
                let r = get!(self.eval(rhs, &loc));
                let result = compute(*op, l, r);
                get!(self.write_var(dst, result, &loc));
                self.advance()
            }
            Instr::OwnerUse { .. } => self.advance(),
            Instr::Call {
                result,
                callee,
                args,
            } => {
                let (callee_idx, callee_fn) = match self
                    .prog
                    .functions
                    .iter()
                    .enumerate()
                    .find(|(_, f)| f.name == *callee)
                {
                    Some(x) => x,
                    None => fail!(
                        ErrorReason::UnknownFunction,
                        format!("call to unknown function '{}'", callee)
                    ),
                };
                if callee_fn.params.len() != args.len() {
                    fail!(
                        ErrorReason::ArityMismatch,
                        format!(
                            "'{}' takes {} arguments, {} given",
                            callee,
                            callee_fn.params.len(),
                            args.len()
                        )
                    );
                }
                let mut store = BTreeMap::new();
                for ((pname, class, by_ref), arg) in callee_fn.params.iter().zip(args) {
                    if *by_ref {
                        let addr = match self.addr_of(arg) {
                            Some(a) => a,
                            None => fail!(
                                ErrorReason::UnboundVariable,
                                format!("by-reference argument '{}' is not bound", arg)
                            ),
                        };
                        store.insert(pname.clone(), addr);
                    } else {
                        let val = get!(self.read_var(arg, &loc));
                        let cell = create_cell_raw(&mut self.state);
                        let _ = class;
                        self.state.memory.insert(cell, val);
                        store.insert(pname.clone(), cell);
                    }
                }
                // The caller frame stays at the call site while the callee
                // runs, so error stacks name the call line; it advances
                // when the callee returns.
                self.frames.push(Frame {
                    func: callee_idx,
                    node: callee_fn.cfg.entry,
                    store,
                    result_var: result.clone(),
                });
                Stepped::Continue(self)
            }
            Instr::Return { value } => {
                let val = match value {
                    Some(v) => Some(get!(self.read_var(v, &loc))),
                    None => None,
                };
                let finished = self.frames.pop().expect("machine has a frame");
                if self.frames.is_empty() {
                    return Stepped::Terminal(self.state);
                }
                if let Some(result_var) = finished.result_var {
                    let val = val.unwrap_or(ConcreteValue::NullAtom);
                    get!(self.write_var(&result_var, val, &loc));
                }
                // Advance the caller past the call node.
                let frame = self.frames.last_mut().expect("caller frame exists");
                let func = &self.prog.functions[frame.func];
                let succs = &func.cfg.nodes[frame.node].succs;
                debug_assert_eq!(succs.len(), 1, "call nodes have one successor");
                frame.node = succs[0];
                Stepped::Continue(self)
            }
            Instr::Nop { cond: None } => self.advance(),
            Instr::Nop { cond: Some(op) } => {
                let frame = self.frames.last().expect("machine has a frame");
                let func = &self.prog.functions[frame.func];
                let succs = &func.cfg.nodes[frame.node].succs;
                if succs.len() == 1 {
                    // Condition of a pruned branch arm.
                    return self.advance();
                }
                match get!(self.eval(op, &loc)) {
                    ConcreteValue::Integer(n) => Stepped::Continue(self.take_branch(n != 0)),
                    _ => Stepped::NeedsChoice(self),
                }
            }
        }
    }

    /// Writes a cell without Owner deallocation semantics (move sources
    /// hand their block to the destination).
    fn write_var_raw(&mut self, var: &str, value: ConcreteValue, loc: &SourceLoc) -> Result<(), ErrorConfig> {
        let addr = self.addr_of(var).ok_or_else(|| {
            self.error(
                loc,
                ErrorReason::UnboundVariable,
                format!("variable '{}' is not bound", var),
            )
        })?;
        self.state.memory.insert(addr, value);
        Ok(())
    }
}

/// Creates a variable cell initialized to null. Owners additionally
/// allocate and hold a fresh 1-cell block.
fn create_cell(state: &mut ConcreteState, class: TypeClass) -> Address {
    let addr = create_cell_raw(state);
    if class.kind == TypeKind::Owner {
        let block = state.fresh();
        state.memory.insert(block, ConcreteValue::NullAtom);
        state.blocks.insert(block, 1);
        state.memory.insert(addr, ConcreteValue::Address(block));
    }
    addr
}

fn create_cell_raw(state: &mut ConcreteState) -> Address {
    let addr = state.fresh();
    state.memory.insert(addr, ConcreteValue::NullAtom);
    addr
}

fn compute(op: ComputeOp, l: ConcreteValue, r: ConcreteValue) -> ConcreteValue {
    use ConcreteValue::*;
    let (a, b) = match (l, r) {
        (Integer(a), Integer(b)) => (a, b),
        // Comparisons and arithmetic over non-integers are unknown.
        _ => return NullAtom,
    };
    match op {
        ComputeOp::Add => Integer(a.wrapping_add(b)),
        ComputeOp::Sub => Integer(a.wrapping_sub(b)),
        ComputeOp::Mul => Integer(a.wrapping_mul(b)),
        ComputeOp::Div => {
            if b == 0 {
                NullAtom
            } else {
                Integer(a.wrapping_div(b))
            }
        }
        ComputeOp::Eq => Integer((a == b) as i64),
        ComputeOp::Ne => Integer((a != b) as i64),
        ComputeOp::Lt => Integer((a < b) as i64),
        ComputeOp::Le => Integer((a <= b) as i64),
        ComputeOp::Gt => Integer((a > b) as i64),
        ComputeOp::Ge => Integer((a >= b) as i64),
        ComputeOp::Index => NullAtom,
    }
}

// ---------------------------------------------------------------------
// Drivers

#[derive(Clone, Copy, Debug)]
pub struct RunLimits {
    pub max_steps: usize,
}

impl Default for RunLimits {
    fn default() -> Self {
        RunLimits { max_steps: 100_000 }
    }
}

/// Runs a single execution. Undecidable branches consume `choices` in
/// order and default to false once exhausted.
pub fn run(
    prog: &NormProgram,
    entry: &str,
    limits: RunLimits,
    choices: &[bool],
    mut trace: Option<&mut Vec<String>>,
) -> RunOutcome {
    let mut machine = match Machine::new(prog, entry) {
        Ok(m) => m,
        Err(e) => return RunOutcome::Error(e),
    };
    let mut next_choice = 0usize;
    for _ in 0..limits.max_steps {
        if let Some(t) = trace.as_deref_mut() {
            t.push(machine.describe_position());
        }
        machine = match machine.step() {
            Stepped::Continue(m) => m,
            Stepped::NeedsChoice(m) => {
                let choice = choices.get(next_choice).copied().unwrap_or(false);
                next_choice += 1;
                m.take_branch(choice)
            }
            Stepped::Terminal(state) => return RunOutcome::Terminal(state),
            Stepped::Error(e) => return RunOutcome::Error(e),
        };
    }
    RunOutcome::LimitExceeded
}

#[derive(Clone, Copy, Debug)]
pub struct PathBounds {
    /// Maximum undecidable choices along one path.
    pub max_branch_depth: usize,
    /// Maximum times one syntactic branch may resolve to true per path.
    pub max_loop_unrolls: usize,
    pub max_steps_per_path: usize,
    pub max_paths: usize,
}

impl Default for PathBounds {
    fn default() -> Self {
        PathBounds {
            max_branch_depth: 12,
            max_loop_unrolls: 3,
            max_steps_per_path: 20_000,
            max_paths: 512,
        }
    }
}

#[derive(Clone, Debug)]
pub struct PathOutcome {
    /// The branch resolutions taken, in order.
    pub trace: Vec<bool>,
    pub outcome: RunOutcome,
}

#[derive(Clone, Debug)]
pub struct PathSet {
    pub outcomes: Vec<PathOutcome>,
    /// False when a bound truncated the enumeration.
    pub complete: bool,
}

impl PathSet {
    pub fn memory_errors(&self) -> impl Iterator<Item = &ErrorConfig> {
        self.outcomes.iter().filter_map(|p| {
            p.outcome
                .error()
                .filter(|e| e.reason.is_memory_error())
        })
    }
}

/// Executes every branch resolution within the bounds, depth first.
pub fn enumerate_paths(prog: &NormProgram, entry: &str, bounds: PathBounds) -> PathSet {
    struct Pending<'p> {
        machine: Machine<'p>,
        trace: Vec<bool>,
        true_counts: BTreeMap<(usize, NodeId), usize>,
        steps: usize,
    }

    let mut outcomes = Vec::new();
    let mut complete = true;
    let root = match Machine::new(prog, entry) {
        Ok(m) => m,
        Err(e) => {
            return PathSet {
                outcomes: vec![PathOutcome {
                    trace: Vec::new(),
                    outcome: RunOutcome::Error(e),
                }],
                complete: true,
            }
        }
    };
    let mut stack = vec![Pending {
        machine: root,
        trace: Vec::new(),
        true_counts: BTreeMap::new(),
        steps: 0,
    }];

    while let Some(mut pending) = stack.pop() {
        if outcomes.len() >= bounds.max_paths {
            complete = false;
            break;
        }
        let outcome = loop {
            if pending.steps >= bounds.max_steps_per_path {
                complete = false;
                break RunOutcome::LimitExceeded;
            }
            pending.steps += 1;
            match pending.machine.step() {
                Stepped::Continue(m) => pending.machine = m,
                Stepped::Terminal(state) => break RunOutcome::Terminal(state),
                Stepped::Error(e) => break RunOutcome::Error(e),
                Stepped::NeedsChoice(m) => {
                    let key = m.branch_key();
                    let trues = pending.true_counts.get(&key).copied().unwrap_or(0);
                    let can_fork = pending.trace.len() < bounds.max_branch_depth;
                    let can_true = trues < bounds.max_loop_unrolls;
                    if can_fork && can_true {
                        let mut forked_counts = pending.true_counts.clone();
                        *forked_counts.entry(key).or_insert(0) += 1;
                        let mut forked_trace = pending.trace.clone();
                        forked_trace.push(true);
                        stack.push(Pending {
                            machine: m.clone().take_branch(true),
                            trace: forked_trace,
                            true_counts: forked_counts,
                            steps: pending.steps,
                        });
                    } else {
                        complete = false;
                    }
                    pending.trace.push(false);
                    pending.machine = m.take_branch(false);
                }
            }
        };
        outcomes.push(PathOutcome {
            trace: pending.trace,
            outcome,
        });
    }
    PathSet { outcomes, complete }
}
