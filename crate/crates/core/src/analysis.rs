//! Symbolic dependency and affinity analyses over an [`ExprGraph`].
//!
//! All results are memoized per `(expression, variable)` pair in an
//! [`AnalysisCache`]. Because the graph is append-only, an entry computed
//! once stays valid while more nodes are added.

use std::collections::HashMap;

use thiserror::Error;

use crate::compgraph::{ExprError, ExprGraph, ExprNode, ExprRef, PrimitiveOp};
use crate::model::NodeId;

/// Classification of an expression relative to one variable `x`.
///
/// `slope_nonzero` and `intercept_nonzero` are conservative: `false` means
/// the slope (intercept) is certainly zero.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct AffineTriple {
    pub is_affine: bool,
    pub slope_nonzero: bool,
    pub intercept_nonzero: bool,
}

impl AffineTriple {
    const NOT_AFFINE: AffineTriple = AffineTriple::new(false, false, false);

    pub const fn new(is_affine: bool, slope_nonzero: bool, intercept_nonzero: bool) -> Self {
        if !is_affine {
            return AffineTriple {
                is_affine: false,
                slope_nonzero: false,
                intercept_nonzero: false,
            };
        }
        AffineTriple {
            is_affine,
            slope_nonzero,
            intercept_nonzero,
        }
    }

    pub fn linear(self) -> bool {
        self.is_affine && !self.intercept_nonzero
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("expression {expr} is not affine in {var} (at node {at})")]
    NotAffine { expr: ExprRef, var: NodeId, at: ExprRef },
    #[error(transparent)]
    Expr(#[from] ExprError),
}

#[derive(Clone, Debug, Default)]
pub struct AnalysisCache {
    dependent: HashMap<(ExprRef, NodeId), bool>,
    affine: HashMap<(ExprRef, NodeId), AffineTriple>,
    coeff: HashMap<(ExprRef, NodeId), (ExprRef, ExprRef)>,
    visits: usize,
}

impl AnalysisCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn clear(&mut self) {
        self.dependent.clear();
        self.affine.clear();
        self.coeff.clear();
    }

    /// Number of nodes whose result was computed (not read from cache)
    /// since construction or the last [`reset_visits`](Self::reset_visits).
    pub fn visits(&self) -> usize {
        self.visits
    }

    pub fn reset_visits(&mut self) {
        self.visits = 0;
    }

    /// Does `expr` depend on `Input(var)`?
    pub fn dependent(&mut self, g: &ExprGraph, expr: ExprRef, var: NodeId) -> bool {
        let memo = &self.dependent;
        let order = g.postorder(expr, |r| memo.contains_key(&(r, var)));
        for r in order {
            let dep = match *g.node(r) {
                ExprNode::Input(u) => u == var,
                ExprNode::Const(_) => false,
                node => node.operands().any(|a| self.dependent[&(a, var)]),
            };
            self.visits += 1;
            self.dependent.insert((r, var), dep);
        }
        self.dependent[&(expr, var)]
    }

    /// Affinity triple of `expr` in `var`.
    pub fn affine_all(&mut self, g: &ExprGraph, expr: ExprRef, var: NodeId) -> AffineTriple {
        let memo = &self.affine;
        let order = g.postorder(expr, |r| memo.contains_key(&(r, var)));
        for r in order {
            let triple = match *g.node(r) {
                ExprNode::Input(u) if u == var => AffineTriple::new(true, true, false),
                ExprNode::Input(_) => AffineTriple::new(true, false, true),
                ExprNode::Const(c) => AffineTriple::new(true, false, c != 0.0),
                ExprNode::Binary(op, a, b) => {
                    let (x, y) = (self.affine[&(a, var)], self.affine[&(b, var)]);
                    combine_binary(op, x, y)
                }
                ExprNode::Unary(_, a) => {
                    let x = self.affine[&(a, var)];
                    if x.is_affine && !x.slope_nonzero {
                        AffineTriple::new(true, false, true)
                    } else {
                        AffineTriple::NOT_AFFINE
                    }
                }
            };
            self.visits += 1;
            self.affine.insert((r, var), triple);
        }
        self.affine[&(expr, var)]
    }

    pub fn affine(&mut self, g: &ExprGraph, expr: ExprRef, var: NodeId) -> bool {
        self.affine_all(g, expr, var).is_affine
    }

    pub fn linear(&mut self, g: &ExprGraph, expr: ExprRef, var: NodeId) -> bool {
        self.affine_all(g, expr, var).linear()
    }

    /// Coefficients `(p, q)` with `expr = p * x + q`, built in `g`.
    ///
    /// Neither `p` nor `q` mentions `var`. A zero coefficient is the interned
    /// literal zero, so callers can test it with [`ExprGraph::is_zero`].
    pub fn affine_coeff(
        &mut self,
        g: &mut ExprGraph,
        expr: ExprRef,
        var: NodeId,
    ) -> Result<(ExprRef, ExprRef), AnalysisError> {
        if let Some(&pq) = self.coeff.get(&(expr, var)) {
            return Ok(pq);
        }
        // Mark var-independent subtrees first so the traversal below stops
        // at them.
        self.dependent(g, expr, var);
        let order = {
            let (coeff, dep) = (&self.coeff, &self.dependent);
            g.postorder(expr, |r| coeff.contains_key(&(r, var)) || !dep[&(r, var)])
        };
        let not_affine = |at| AnalysisError::NotAffine { expr, var, at };
        for r in order {
            let node = *g.node(r);
            let coeff_of = |this: &mut Self, g: &mut ExprGraph, a: ExprRef| -> (ExprRef, ExprRef) {
                if let Some(&pq) = this.coeff.get(&(a, var)) {
                    return pq;
                }
                let pq = (g.zero(), a);
                this.coeff.insert((a, var), pq);
                pq
            };
            let pq = match node {
                ExprNode::Input(u) if u == var => (g.one(), g.zero()),
                ExprNode::Binary(op, a, b) => {
                    let (p1, q1) = coeff_of(self, g, a);
                    let (p2, q2) = coeff_of(self, g, b);
                    match op {
                        PrimitiveOp::Add => (g.add(p1, p2)?, g.add(q1, q2)?),
                        PrimitiveOp::Sub => (g.sub(p1, p2)?, g.sub(q1, q2)?),
                        PrimitiveOp::Mul if g.is_zero(p1) => (g.mul(q1, p2)?, g.mul(q1, q2)?),
                        PrimitiveOp::Mul if g.is_zero(p2) => (g.mul(p1, q2)?, g.mul(q1, q2)?),
                        PrimitiveOp::Div if g.is_zero(p2) => (g.div(p1, q2)?, g.div(q1, q2)?),
                        _ => return Err(not_affine(r)),
                    }
                }
                // Var-independent nodes are never in `order`, so anything
                // else here is a nonlinear op over the variable.
                _ => return Err(not_affine(r)),
            };
            self.visits += 1;
            self.coeff.insert((r, var), pq);
        }
        match self.coeff.get(&(expr, var)) {
            Some(&pq) => Ok(pq),
            None => {
                // `expr` itself does not depend on var.
                let pq = (g.zero(), expr);
                self.coeff.insert((expr, var), pq);
                Ok(pq)
            }
        }
    }
}

fn combine_binary(op: PrimitiveOp, x: AffineTriple, y: AffineTriple) -> AffineTriple {
    let r = x.is_affine && y.is_affine;
    match op {
        PrimitiveOp::Add | PrimitiveOp::Sub => AffineTriple::new(
            r,
            x.slope_nonzero || y.slope_nonzero,
            x.intercept_nonzero || y.intercept_nonzero,
        ),
        PrimitiveOp::Mul if !x.slope_nonzero => AffineTriple::new(
            r,
            x.intercept_nonzero && y.slope_nonzero,
            x.intercept_nonzero && y.intercept_nonzero,
        ),
        PrimitiveOp::Mul if !y.slope_nonzero => AffineTriple::new(
            r,
            x.slope_nonzero && y.intercept_nonzero,
            x.intercept_nonzero && y.intercept_nonzero,
        ),
        PrimitiveOp::Div if !y.slope_nonzero => AffineTriple::new(r, x.slope_nonzero, x.intercept_nonzero),
        _ => AffineTriple::NOT_AFFINE,
    }
}

/// Uncached [`AnalysisCache::dependent`].
pub fn dependent(g: &ExprGraph, expr: ExprRef, var: NodeId) -> bool {
    AnalysisCache::new().dependent(g, expr, var)
}

/// Uncached [`AnalysisCache::affine_all`].
pub fn affine_all(g: &ExprGraph, expr: ExprRef, var: NodeId) -> AffineTriple {
    AnalysisCache::new().affine_all(g, expr, var)
}

/// Uncached [`AnalysisCache::affine_coeff`].
pub fn affine_coeff(g: &mut ExprGraph, expr: ExprRef, var: NodeId) -> Result<(ExprRef, ExprRef), AnalysisError> {
    AnalysisCache::new().affine_coeff(g, expr, var)
}
