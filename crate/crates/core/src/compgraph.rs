//! Append-only computation graphs for symbolic parameter expressions.
//!
//! Every distribution parameter in a [`GraphicalModel`](crate::model::GraphicalModel)
//! is an [`ExprRef`] into one shared [`ExprGraph`]. Nodes are stored in
//! topological order: an operation can only reference nodes appended before
//! it. Inputs (random variables) and literals are interned, structurally
//! identical operations are shared, and a handful of algebraic identities
//! around literal zeros and ones are applied while the graph is built.
//!
//! The zero rules matter downstream: coefficient extraction asks whether a
//! symbolic slope "is zero", which is answered by comparing against the
//! interned `Const(0)` node rather than by evaluating anything.

use std::collections::HashMap;
use std::fmt;

use thiserror::Error;

use crate::model::NodeId;

/// Index of a node inside an [`ExprGraph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ExprRef(u32);

impl ExprRef {
    pub fn index(self) -> usize {
        self.0 as usize
    }

    /// Reference to position `index`. Only meaningful for a graph with more
    /// than `index` nodes.
    pub fn from_index(index: usize) -> Self {
        ExprRef(u32::try_from(index).expect("expression index overflow"))
    }
}

impl fmt::Display for ExprRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "%{}", self.0)
    }
}

/// The closed set of primitive operations.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PrimitiveOp {
    Add,
    Sub,
    Mul,
    Div,
    Neg,
    Square,
    Sqrt,
    Exp,
    Log,
    /// `x^e` for a literal exponent `e`.
    PowConst(f64),
}

impl PrimitiveOp {
    pub fn arity(self) -> usize {
        match self {
            PrimitiveOp::Add | PrimitiveOp::Sub | PrimitiveOp::Mul | PrimitiveOp::Div => 2,
            _ => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            PrimitiveOp::Add => "ADD",
            PrimitiveOp::Sub => "SUB",
            PrimitiveOp::Mul => "MUL",
            PrimitiveOp::Div => "DIV",
            PrimitiveOp::Neg => "NEG",
            PrimitiveOp::Square => "SQUARE",
            PrimitiveOp::Sqrt => "SQRT",
            PrimitiveOp::Exp => "EXP",
            PrimitiveOp::Log => "LOG",
            PrimitiveOp::PowConst(_) => "POW_CONST",
        }
    }

    /// Applies the operation to concrete values. Returns `None` outside the
    /// operation's domain.
    pub fn eval(self, a: f64, b: f64) -> Option<f64> {
        let v = match self {
            PrimitiveOp::Add => a + b,
            PrimitiveOp::Sub => a - b,
            PrimitiveOp::Mul => a * b,
            PrimitiveOp::Div => {
                if b == 0.0 {
                    return None;
                }
                a / b
            }
            PrimitiveOp::Neg => -a,
            PrimitiveOp::Square => a * a,
            PrimitiveOp::Sqrt => {
                if a < 0.0 {
                    return None;
                }
                a.sqrt()
            }
            PrimitiveOp::Exp => a.exp(),
            PrimitiveOp::Log => {
                if a <= 0.0 {
                    return None;
                }
                a.ln()
            }
            PrimitiveOp::PowConst(e) => {
                if a < 0.0 && e.fract() != 0.0 {
                    return None;
                }
                if a == 0.0 && e < 0.0 {
                    return None;
                }
                a.powf(e)
            }
        };
        if v.is_nan() {
            None
        } else {
            Some(v)
        }
    }

    // Hash key that treats the PowConst exponent by bit pattern.
    fn key(self) -> (u8, u64) {
        match self {
            PrimitiveOp::Add => (0, 0),
            PrimitiveOp::Sub => (1, 0),
            PrimitiveOp::Mul => (2, 0),
            PrimitiveOp::Div => (3, 0),
            PrimitiveOp::Neg => (4, 0),
            PrimitiveOp::Square => (5, 0),
            PrimitiveOp::Sqrt => (6, 0),
            PrimitiveOp::Exp => (7, 0),
            PrimitiveOp::Log => (8, 0),
            PrimitiveOp::PowConst(e) => (9, e.to_bits()),
        }
    }
}

/// One entry of an [`ExprGraph`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ExprNode {
    Input(NodeId),
    Const(f64),
    Unary(PrimitiveOp, ExprRef),
    Binary(PrimitiveOp, ExprRef, ExprRef),
}

impl ExprNode {
    /// Operand references, in order.
    pub fn operands(&self) -> impl Iterator<Item = ExprRef> {
        let (a, b) = match *self {
            ExprNode::Input(_) | ExprNode::Const(_) => (None, None),
            ExprNode::Unary(_, a) => (Some(a), None),
            ExprNode::Binary(_, a, b) => (Some(a), Some(b)),
        };
        a.into_iter().chain(b)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExprError {
    #[error("literal {0} is not finite")]
    NonFiniteConstant(f64),
    #[error("{op} expects {expected} operand(s), got {got}")]
    Arity {
        op: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("division by literal zero")]
    DivisionByZero,
    #[error("constant folding of {op} left its domain")]
    FoldDomain { op: &'static str },
    #[error("operand {0} does not belong to this graph")]
    DanglingRef(ExprRef),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("no value bound for input {var} (node {node})")]
    MissingBinding { var: NodeId, node: ExprRef },
    #[error("{op} left its domain at node {node}")]
    Domain { op: &'static str, node: ExprRef },
}

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
enum OpKey {
    Unary((u8, u64), ExprRef),
    Binary((u8, u64), ExprRef, ExprRef),
}

/// Shared, append-only expression DAG.
#[derive(Clone, Debug, Default)]
pub struct ExprGraph {
    nodes: Vec<ExprNode>,
    inputs: HashMap<NodeId, ExprRef>,
    consts: HashMap<u64, ExprRef>,
    ops: HashMap<OpKey, ExprRef>,
}

impl fmt::Debug for OpKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("OpKey")
    }
}

impl ExprGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, r: ExprRef) -> &ExprNode {
        &self.nodes[r.index()]
    }

    pub fn nodes(&self) -> &[ExprNode] {
        &self.nodes
    }

    fn push(&mut self, node: ExprNode) -> ExprRef {
        let r = ExprRef(u32::try_from(self.nodes.len()).expect("expression graph overflow"));
        self.nodes.push(node);
        r
    }

    /// The (deduplicated) input node for random variable `var`.
    pub fn input(&mut self, var: NodeId) -> ExprRef {
        if let Some(&r) = self.inputs.get(&var) {
            return r;
        }
        let r = self.push(ExprNode::Input(var));
        self.inputs.insert(var, r);
        r
    }

    /// Looks up the input node for `var` without creating it.
    pub fn input_ref(&self, var: NodeId) -> Option<ExprRef> {
        self.inputs.get(&var).copied()
    }

    /// The interned literal `value`.
    pub fn constant(&mut self, value: f64) -> Result<ExprRef, ExprError> {
        if !value.is_finite() {
            return Err(ExprError::NonFiniteConstant(value));
        }
        // -0.0 and 0.0 share one node so that the symbolic zero test is exact.
        let value = if value == 0.0 { 0.0 } else { value };
        if let Some(&r) = self.consts.get(&value.to_bits()) {
            return Ok(r);
        }
        let r = self.push(ExprNode::Const(value));
        self.consts.insert(value.to_bits(), r);
        Ok(r)
    }

    pub fn zero(&mut self) -> ExprRef {
        self.constant(0.0).expect("zero is finite")
    }

    pub fn one(&mut self) -> ExprRef {
        self.constant(1.0).expect("one is finite")
    }

    /// Literal value of `r`, if it is a constant node.
    pub fn as_const(&self, r: ExprRef) -> Option<f64> {
        match self.nodes[r.index()] {
            ExprNode::Const(v) => Some(v),
            _ => None,
        }
    }

    /// Symbolic zero test: is `r` the interned `Const(0)` node.
    pub fn is_zero(&self, r: ExprRef) -> bool {
        self.consts.get(&0f64.to_bits()) == Some(&r)
    }

    pub fn is_one(&self, r: ExprRef) -> bool {
        self.consts.get(&1f64.to_bits()) == Some(&r)
    }

    fn check(&self, r: ExprRef) -> Result<(), ExprError> {
        if r.index() < self.nodes.len() {
            Ok(())
        } else {
            Err(ExprError::DanglingRef(r))
        }
    }

    /// Appends `kind(operands)`, simplifying around literal zeros and ones
    /// and folding all-literal operations.
    pub fn apply(&mut self, kind: PrimitiveOp, operands: &[ExprRef]) -> Result<ExprRef, ExprError> {
        if operands.len() != kind.arity() {
            return Err(ExprError::Arity {
                op: kind.name(),
                expected: kind.arity(),
                got: operands.len(),
            });
        }
        for &r in operands {
            self.check(r)?;
        }
        if kind.arity() == 1 {
            self.unary(kind, operands[0])
        } else {
            self.binary(kind, operands[0], operands[1])
        }
    }

    fn unary(&mut self, kind: PrimitiveOp, a: ExprRef) -> Result<ExprRef, ExprError> {
        if let Some(x) = self.as_const(a) {
            let v = kind
                .eval(x, 0.0)
                .filter(|v| v.is_finite())
                .ok_or(ExprError::FoldDomain { op: kind.name() })?;
            return self.constant(v);
        }
        if let PrimitiveOp::PowConst(e) = kind {
            if e == 1.0 {
                return Ok(a);
            }
        }
        let key = OpKey::Unary(kind.key(), a);
        if let Some(&r) = self.ops.get(&key) {
            return Ok(r);
        }
        let r = self.push(ExprNode::Unary(kind, a));
        self.ops.insert(key, r);
        Ok(r)
    }

    fn binary(&mut self, kind: PrimitiveOp, a: ExprRef, b: ExprRef) -> Result<ExprRef, ExprError> {
        use PrimitiveOp::*;
        if kind == Div && self.is_zero(b) {
            return Err(ExprError::DivisionByZero);
        }
        if let (Some(x), Some(y)) = (self.as_const(a), self.as_const(b)) {
            let v = kind
                .eval(x, y)
                .filter(|v| v.is_finite())
                .ok_or(ExprError::FoldDomain { op: kind.name() })?;
            return self.constant(v);
        }
        match kind {
            Add if self.is_zero(b) => return Ok(a),
            Add if self.is_zero(a) => return Ok(b),
            Sub if self.is_zero(b) => return Ok(a),
            Mul if self.is_zero(a) || self.is_zero(b) => return Ok(self.zero()),
            Mul if self.is_one(b) => return Ok(a),
            Mul if self.is_one(a) => return Ok(b),
            Div if self.is_zero(a) => return Ok(self.zero()),
            Div if self.is_one(b) => return Ok(a),
            _ => {}
        }
        let key = OpKey::Binary(kind.key(), a, b);
        if let Some(&r) = self.ops.get(&key) {
            return Ok(r);
        }
        let r = self.push(ExprNode::Binary(kind, a, b));
        self.ops.insert(key, r);
        Ok(r)
    }

    pub fn add(&mut self, a: ExprRef, b: ExprRef) -> Result<ExprRef, ExprError> {
        self.apply(PrimitiveOp::Add, &[a, b])
    }

    pub fn sub(&mut self, a: ExprRef, b: ExprRef) -> Result<ExprRef, ExprError> {
        self.apply(PrimitiveOp::Sub, &[a, b])
    }

    pub fn mul(&mut self, a: ExprRef, b: ExprRef) -> Result<ExprRef, ExprError> {
        self.apply(PrimitiveOp::Mul, &[a, b])
    }

    pub fn div(&mut self, a: ExprRef, b: ExprRef) -> Result<ExprRef, ExprError> {
        self.apply(PrimitiveOp::Div, &[a, b])
    }

    pub fn neg(&mut self, a: ExprRef) -> Result<ExprRef, ExprError> {
        self.apply(PrimitiveOp::Neg, &[a])
    }

    pub fn square(&mut self, a: ExprRef) -> Result<ExprRef, ExprError> {
        self.apply(PrimitiveOp::Square, &[a])
    }

    pub fn sqrt(&mut self, a: ExprRef) -> Result<ExprRef, ExprError> {
        self.apply(PrimitiveOp::Sqrt, &[a])
    }

    pub fn exp(&mut self, a: ExprRef) -> Result<ExprRef, ExprError> {
        self.apply(PrimitiveOp::Exp, &[a])
    }

    pub fn log(&mut self, a: ExprRef) -> Result<ExprRef, ExprError> {
        self.apply(PrimitiveOp::Log, &[a])
    }

    pub fn pow_const(&mut self, a: ExprRef, exponent: f64) -> Result<ExprRef, ExprError> {
        self.apply(PrimitiveOp::PowConst(exponent), &[a])
    }

    /// Nodes reachable from `root` that are not yet `done`, children first.
    /// Each node appears at most once.
    pub(crate) fn postorder(&self, root: ExprRef, mut done: impl FnMut(ExprRef) -> bool) -> Vec<ExprRef> {
        let mut out = Vec::new();
        let mut seen = std::collections::HashSet::new();
        let mut stack = vec![(root, false)];
        while let Some((r, expanded)) = stack.pop() {
            if expanded {
                out.push(r);
                continue;
            }
            if done(r) || !seen.insert(r) {
                continue;
            }
            stack.push((r, true));
            for op in self.nodes[r.index()].operands() {
                stack.push((op, false));
            }
        }
        out
    }

    /// Random variables whose inputs are reachable from any of `roots`.
    pub fn reachable_inputs(&self, roots: &[ExprRef]) -> std::collections::BTreeSet<NodeId> {
        let mut seen = vec![false; self.nodes.len()];
        let mut stack: Vec<ExprRef> = roots.to_vec();
        let mut vars = std::collections::BTreeSet::new();
        while let Some(r) = stack.pop() {
            if std::mem::replace(&mut seen[r.index()], true) {
                continue;
            }
            match self.nodes[r.index()] {
                ExprNode::Input(v) => {
                    vars.insert(v);
                }
                node => stack.extend(node.operands()),
            }
        }
        vars
    }

    /// Rebuilds `root` with every occurrence of `Input(var)` replaced by
    /// `replacement`. Subexpressions that do not mention `var` are reused.
    pub fn substitute(&mut self, root: ExprRef, var: NodeId, replacement: ExprRef) -> Result<ExprRef, ExprError> {
        let Some(target) = self.input_ref(var) else {
            return Ok(root);
        };
        let mut memo: HashMap<ExprRef, ExprRef> = HashMap::new();
        for r in self.postorder(root, |_| false) {
            let new = match *self.node(r) {
                ExprNode::Input(_) if r == target => replacement,
                ExprNode::Input(_) | ExprNode::Const(_) => r,
                ExprNode::Unary(op, a) => {
                    let a2 = memo[&a];
                    if a2 == a {
                        r
                    } else {
                        self.apply(op, &[a2])?
                    }
                }
                ExprNode::Binary(op, a, b) => {
                    let (a2, b2) = (memo[&a], memo[&b]);
                    if a2 == a && b2 == b {
                        r
                    } else {
                        self.apply(op, &[a2, b2])?
                    }
                }
            };
            memo.insert(r, new);
        }
        Ok(memo[&root])
    }

    /// Evaluates `root` once, reading inputs from `bindings`.
    pub fn evaluate(&self, root: ExprRef, bindings: &HashMap<NodeId, f64>) -> Result<f64, EvalError> {
        Evaluator::new(self).eval(root, |v| bindings.get(&v).copied())
    }

    /// Human-readable dump, one node per line.
    pub fn dump(&self) -> String {
        self.dump_with(|v| format!("x{}", v.index()))
    }

    /// Like [`dump`](Self::dump) with custom input labels.
    pub fn dump_with(&self, label: impl Fn(NodeId) -> String) -> String {
        let mut s = String::new();
        for (i, node) in self.nodes.iter().enumerate() {
            let line = match *node {
                ExprNode::Input(v) => format!("%{i} = INPUT {}", label(v)),
                ExprNode::Const(c) => format!("%{i} = CONST {c}"),
                ExprNode::Unary(PrimitiveOp::PowConst(e), a) => format!("%{i} = POW_CONST {a} {e}"),
                ExprNode::Unary(op, a) => format!("%{i} = {} {a}", op.name()),
                ExprNode::Binary(op, a, b) => format!("%{i} = {} {a} {b}", op.name()),
            };
            s.push_str(&line);
            s.push('\n');
        }
        s
    }
}

impl fmt::Display for ExprGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.dump())
    }
}

/// Memoizing evaluator over a frozen graph.
///
/// Values computed since the last [`reset`](Evaluator::reset) are reused, so
/// evaluating many roots that share subexpressions costs one pass over the
/// union of their reachable nodes. Inputs are read lazily through the lookup
/// closure at the moment they are first needed.
pub struct Evaluator<'g> {
    graph: &'g ExprGraph,
    values: Vec<f64>,
    stamp: Vec<u32>,
    epoch: u32,
    stack: Vec<(ExprRef, bool)>,
}

impl<'g> Evaluator<'g> {
    pub fn new(graph: &'g ExprGraph) -> Self {
        Evaluator {
            graph,
            values: vec![0.0; graph.len()],
            stamp: vec![0; graph.len()],
            epoch: 1,
            stack: Vec::new(),
        }
    }

    /// Forgets all cached values.
    pub fn reset(&mut self) {
        self.epoch = self.epoch.wrapping_add(1);
        if self.epoch == 0 {
            self.stamp.iter_mut().for_each(|s| *s = 0);
            self.epoch = 1;
        }
    }

    pub fn eval(&mut self, root: ExprRef, lookup: impl Fn(NodeId) -> Option<f64>) -> Result<f64, EvalError> {
        let epoch = self.epoch;
        if self.stamp[root.index()] == epoch {
            return Ok(self.values[root.index()]);
        }
        self.stack.clear();
        self.stack.push((root, false));
        while let Some((r, expanded)) = self.stack.pop() {
            let i = r.index();
            if self.stamp[i] == epoch {
                continue;
            }
            let node = self.graph.nodes[i];
            if !expanded {
                match node {
                    ExprNode::Input(var) => {
                        let v = lookup(var).ok_or(EvalError::MissingBinding { var, node: r })?;
                        self.values[i] = v;
                        self.stamp[i] = epoch;
                    }
                    ExprNode::Const(c) => {
                        self.values[i] = c;
                        self.stamp[i] = epoch;
                    }
                    _ => {
                        self.stack.push((r, true));
                        for op in node.operands() {
                            if self.stamp[op.index()] != epoch {
                                self.stack.push((op, false));
                            }
                        }
                    }
                }
                continue;
            }
            let v = match node {
                ExprNode::Unary(op, a) => op.eval(self.values[a.index()], 0.0),
                ExprNode::Binary(op, a, b) => op.eval(self.values[a.index()], self.values[b.index()]),
                _ => unreachable!("leaves are resolved on first visit"),
            };
            let op_name = match node {
                ExprNode::Unary(op, _) | ExprNode::Binary(op, _, _) => op.name(),
                _ => "",
            };
            self.values[i] = v.ok_or(EvalError::Domain { op: op_name, node: r })?;
            self.stamp[i] = epoch;
        }
        Ok(self.values[root.index()])
    }
}
