//! Reverse-mode gradients of a model's log joint in unconstrained space.
//!
//! [`LogDensityFn::new`] flattens the whole log joint (parameter
//! expressions, per-family densities, bijections and their Jacobians) into
//! one straight-line tape. Evaluating it is a forward sweep followed by one
//! adjoint sweep.

use std::collections::HashMap;
use std::f64::consts::PI;

use statrs::function::gamma::{digamma, ln_gamma};
use thiserror::Error;

use crate::compgraph::{ExprNode, ExprRef, PrimitiveOp};
use crate::dists::{digamma_diff, ln_rising, sigmoid, softplus, Bijection, BijectionKind, Family};
use crate::model::{Assignment, GraphicalModel, ModelError, NodeId};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GradError {
    #[error("latent node {name} has discrete family {family}; gradient-based sampling needs continuous latents")]
    DiscreteLatent { name: String, family: Family },
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Unary {
    Neg,
    Square,
    Sqrt,
    Exp,
    Log,
    Pow(f64),
    Lgamma,
    Softplus,
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Binary {
    Add,
    Sub,
    Mul,
    Div,
    /// `ln Γ(a + b) - ln Γ(a)`.
    LnRising,
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Inst {
    Input(usize),
    Const(f64),
    Unary(Unary, u32),
    Binary(Binary, u32, u32),
}

impl Unary {
    fn apply(self, a: f64) -> f64 {
        match self {
            Unary::Neg => -a,
            Unary::Square => a * a,
            Unary::Sqrt => a.sqrt(),
            Unary::Exp => a.exp(),
            Unary::Log => a.ln(),
            Unary::Pow(e) => a.powf(e),
            Unary::Lgamma => {
                if a > 0.0 {
                    ln_gamma(a)
                } else {
                    f64::NAN
                }
            }
            Unary::Softplus => softplus(a),
        }
    }

    /// d out / d a.
    fn deriv(self, a: f64, out: f64) -> f64 {
        match self {
            Unary::Neg => -1.0,
            Unary::Square => 2.0 * a,
            Unary::Sqrt => 0.5 / out,
            Unary::Exp => out,
            Unary::Log => 1.0 / a,
            Unary::Pow(e) => e * a.powf(e - 1.0),
            Unary::Lgamma => digamma(a),
            Unary::Softplus => sigmoid(a),
        }
    }
}

impl Binary {
    fn apply(self, a: f64, b: f64) -> f64 {
        match self {
            Binary::Add => a + b,
            Binary::Sub => a - b,
            Binary::Mul => a * b,
            Binary::Div => a / b,
            Binary::LnRising => {
                if a > 0.0 && b >= 0.0 {
                    ln_rising(a, b)
                } else {
                    f64::NAN
                }
            }
        }
    }
}

type Slot = u32;

/// Which kind of check an observed value needs at run time.
#[derive(Clone, Copy, Debug, PartialEq)]
enum Guard {
    NonNegative(Slot),
    Integer(Slot),
}

struct Builder<'m> {
    model: &'m GraphicalModel,
    tape: Vec<Inst>,
    consts: HashMap<u64, Slot>,
    memo: HashMap<ExprRef, Slot>,
    vars: HashMap<NodeId, Slot>,
    /// log x and log(1 - x) slots for unit-interval latents.
    logs: HashMap<Slot, (Slot, Slot)>,
    guards: Vec<Guard>,
}

impl<'m> Builder<'m> {
    fn push(&mut self, inst: Inst) -> Slot {
        let s = self.tape.len() as Slot;
        self.tape.push(inst);
        s
    }

    fn konst(&mut self, v: f64) -> Slot {
        let v = if v == 0.0 { 0.0 } else { v };
        if let Some(&s) = self.consts.get(&v.to_bits()) {
            return s;
        }
        let s = self.push(Inst::Const(v));
        self.consts.insert(v.to_bits(), s);
        s
    }

    fn const_of(&self, s: Slot) -> Option<f64> {
        match self.tape[s as usize] {
            Inst::Const(c) => Some(c),
            _ => None,
        }
    }

    fn un(&mut self, op: Unary, a: Slot) -> Slot {
        if let Some(x) = self.const_of(a) {
            let v = op.apply(x);
            if v.is_finite() {
                return self.konst(v);
            }
        }
        self.push(Inst::Unary(op, a))
    }

    fn bin(&mut self, op: Binary, a: Slot, b: Slot) -> Slot {
        let (ca, cb) = (self.const_of(a), self.const_of(b));
        if let (Some(x), Some(y)) = (ca, cb) {
            let v = op.apply(x, y);
            if v.is_finite() {
                return self.konst(v);
            }
        }
        match (op, ca, cb) {
            (Binary::Add, Some(z), _) if z == 0.0 => return b,
            (Binary::Add | Binary::Sub, _, Some(z)) if z == 0.0 => return a,
            (Binary::Mul, Some(o), _) if o == 1.0 => return b,
            (Binary::Mul | Binary::Div, _, Some(o)) if o == 1.0 => return a,
            _ => {}
        }
        self.push(Inst::Binary(op, a, b))
    }

    fn add(&mut self, a: Slot, b: Slot) -> Slot {
        self.bin(Binary::Add, a, b)
    }

    fn sub(&mut self, a: Slot, b: Slot) -> Slot {
        self.bin(Binary::Sub, a, b)
    }

    fn mul(&mut self, a: Slot, b: Slot) -> Slot {
        self.bin(Binary::Mul, a, b)
    }

    fn div(&mut self, a: Slot, b: Slot) -> Slot {
        self.bin(Binary::Div, a, b)
    }

    fn log(&mut self, a: Slot) -> Slot {
        if let Some(&(l, _)) = self.logs.get(&a) {
            return l;
        }
        self.un(Unary::Log, a)
    }

    fn log1m(&mut self, a: Slot) -> Slot {
        if let Some(&(_, l)) = self.logs.get(&a) {
            return l;
        }
        let one = self.konst(1.0);
        let d = self.sub(one, a);
        self.un(Unary::Log, d)
    }

    fn lgamma(&mut self, a: Slot) -> Slot {
        self.un(Unary::Lgamma, a)
    }

    fn lbeta(&mut self, a: Slot, b: Slot) -> Slot {
        let (la, lb) = (self.lgamma(a), self.lgamma(b));
        let ab = self.add(a, b);
        let lab = self.lgamma(ab);
        let s = self.add(la, lb);
        self.sub(s, lab)
    }

    fn lchoose(&mut self, n: Slot, k: Slot) -> Slot {
        if let (Some(n), Some(k)) = (self.const_of(n), self.const_of(k)) {
            return self.konst(crate::dists::ln_choose(n, k));
        }
        let one = self.konst(1.0);
        let n1 = self.add(n, one);
        let k1 = self.add(k, one);
        let nk = self.sub(n, k);
        let nk1 = self.add(nk, one);
        let a = self.lgamma(n1);
        let b = self.lgamma(k1);
        let c = self.lgamma(nk1);
        let ab = self.sub(a, b);
        self.sub(ab, c)
    }

    /// `x * log(p)` with `0 * log(0) = 0` for literal zero `x`.
    fn xlog(&mut self, x: Slot, log_p: impl FnOnce(&mut Self) -> Slot) -> Slot {
        if self.const_of(x) == Some(0.0) {
            return self.konst(0.0);
        }
        let l = log_p(self);
        self.mul(x, l)
    }

    fn expr(&mut self, root: ExprRef) -> Slot {
        let g = self.model.graph();
        let memo = &self.memo;
        let order = g.postorder(root, |r| memo.contains_key(&r));
        for r in order {
            let s = match *g.node(r) {
                ExprNode::Input(v) => self.vars[&v],
                ExprNode::Const(c) => self.konst(c),
                ExprNode::Unary(op, a) => {
                    let a = self.memo[&a];
                    let op = match op {
                        PrimitiveOp::Neg => Unary::Neg,
                        PrimitiveOp::Square => Unary::Square,
                        PrimitiveOp::Sqrt => Unary::Sqrt,
                        PrimitiveOp::Exp => Unary::Exp,
                        PrimitiveOp::Log => Unary::Log,
                        PrimitiveOp::PowConst(e) => Unary::Pow(e),
                        _ => unreachable!("binary op stored as unary"),
                    };
                    self.un(op, a)
                }
                ExprNode::Binary(op, a, b) => {
                    let (a, b) = (self.memo[&a], self.memo[&b]);
                    let op = match op {
                        PrimitiveOp::Add => Binary::Add,
                        PrimitiveOp::Sub => Binary::Sub,
                        PrimitiveOp::Mul => Binary::Mul,
                        PrimitiveOp::Div => Binary::Div,
                        _ => unreachable!("unary op stored as binary"),
                    };
                    self.bin(op, a, b)
                }
            };
            self.memo.insert(r, s);
        }
        self.memo[&root]
    }

    /// Log density of `family(p)` at `x`, appended to the tape.
    fn log_density(&mut self, family: Family, p: &[Slot], x: Slot) -> Slot {
        match family {
            Family::Normal => {
                let c = self.konst(-0.5 * (2.0 * PI).ln());
                let lv = self.log(p[1]);
                let half = self.konst(0.5);
                let hlv = self.mul(half, lv);
                let d = self.sub(x, p[0]);
                let d2 = self.un(Unary::Square, d);
                let two = self.konst(2.0);
                let tv = self.mul(two, p[1]);
                let q = self.div(d2, tv);
                let a = self.sub(c, hlv);
                self.sub(a, q)
            }
            Family::HalfCauchy | Family::Cauchy => {
                let (loc, scale) = if family == Family::Cauchy {
                    (Some(p[0]), p[1])
                } else {
                    (None, p[0])
                };
                let base = if family == Family::Cauchy {
                    -PI.ln()
                } else {
                    2f64.ln() - PI.ln()
                };
                let c = self.konst(base);
                let ls = self.log(scale);
                let d = match loc {
                    Some(l) => self.sub(x, l),
                    None => x,
                };
                let z = self.div(d, scale);
                let z2 = self.un(Unary::Square, z);
                let one = self.konst(1.0);
                let z21 = self.add(one, z2);
                let l = self.log(z21);
                let a = self.sub(c, ls);
                self.sub(a, l)
            }
            Family::Beta => {
                let one = self.konst(1.0);
                let am1 = self.sub(p[0], one);
                let bm1 = self.sub(p[1], one);
                let t1 = self.xlog(am1, |s| s.log(x));
                let t2 = self.xlog(bm1, |s| s.log1m(x));
                let lb = self.lbeta(p[0], p[1]);
                let t = self.add(t1, t2);
                self.sub(t, lb)
            }
            Family::Binomial => {
                let lc = self.lchoose(p[0], x);
                let t1 = self.xlog(x, |s| s.log(p[1]));
                let nx = self.sub(p[0], x);
                let t2 = self.xlog(nx, |s| s.log1m(p[1]));
                let t = self.add(lc, t1);
                self.add(t, t2)
            }
            Family::Bernoulli => {
                // x is observed, hence a literal.
                if self.const_of(x) == Some(1.0) {
                    self.log(p[0])
                } else {
                    self.log1m(p[0])
                }
            }
            Family::Gamma => {
                let t1 = self.xlog(p[0], |s| s.log(p[1]));
                let lg = self.lgamma(p[0]);
                let one = self.konst(1.0);
                let am1 = self.sub(p[0], one);
                let t2 = self.xlog(am1, |s| s.log(x));
                let bx = self.mul(p[1], x);
                let a = self.sub(t1, lg);
                let a = self.add(a, t2);
                self.sub(a, bx)
            }
            Family::Exponential => {
                let l = self.log(p[0]);
                let lx = self.mul(p[0], x);
                self.sub(l, lx)
            }
            Family::Uniform => {
                let w = self.sub(p[1], p[0]);
                let l = self.log(w);
                self.un(Unary::Neg, l)
            }
            Family::Pareto => {
                let la = self.log(p[1]);
                let lm = self.log(p[0]);
                let t = self.mul(p[1], lm);
                let one = self.konst(1.0);
                let a1 = self.add(p[1], one);
                let lx = self.log(x);
                let t2 = self.mul(a1, lx);
                let s = self.add(la, t);
                self.sub(s, t2)
            }
            Family::BetaBinomial => {
                let (n, a, b) = (p[0], p[1], p[2]);
                let lc = self.lchoose(n, x);
                let ra = self.bin(Binary::LnRising, a, x);
                let nx = self.sub(n, x);
                let rb = self.bin(Binary::LnRising, b, nx);
                let ab = self.add(a, b);
                let rab = self.bin(Binary::LnRising, ab, n);
                let t = self.add(lc, ra);
                let t = self.add(t, rb);
                self.sub(t, rab)
            }
            Family::CompoundGamma => {
                let (a, b, q) = (p[0], p[1], p[2]);
                let ab = self.add(a, b);
                let rising = self.bin(Binary::LnRising, a, b);
                let lb = self.lgamma(b);
                let t1 = self.xlog(b, |s| s.log(q));
                let one = self.konst(1.0);
                let am1 = self.sub(a, one);
                let t2 = self.xlog(am1, |s| s.log(x));
                let qx = self.add(q, x);
                let lqx = self.log(qx);
                let t3 = self.mul(ab, lqx);
                let s = self.sub(rising, lb);
                let s = self.add(s, t1);
                let s = self.add(s, t2);
                self.sub(s, t3)
            }
        }
    }

    /// Runtime support checks for an observed value whose bounds are not
    /// literals.
    fn support_guards(&mut self, family: Family, p: &[Slot], x: Slot) {
        let nonneg = |b: &mut Self, s: Slot| {
            if b.const_of(s).is_none_or(|v| v < 0.0) {
                b.guards.push(Guard::NonNegative(s));
            }
        };
        match family {
            Family::Binomial | Family::BetaBinomial => {
                let d = self.sub(p[0], x);
                nonneg(self, d);
                if self.const_of(p[0]).is_none() {
                    self.guards.push(Guard::Integer(p[0]));
                }
            }
            Family::Uniform => {
                let lo = self.sub(x, p[0]);
                let hi = self.sub(p[1], x);
                nonneg(self, lo);
                nonneg(self, hi);
            }
            Family::Pareto => {
                let d = self.sub(x, p[0]);
                nonneg(self, d);
            }
            _ => {}
        }
    }
}

/// One latent coordinate of a [`LogDensityFn`].
#[derive(Clone, Debug, PartialEq)]
pub struct Latent {
    pub id: NodeId,
    pub name: String,
    pub family: Family,
    pub kind: BijectionKind,
}

/// Differentiable log density of a model over its unconstrained latents.
#[derive(Clone, Debug)]
pub struct LogDensityFn {
    tape: Vec<Inst>,
    output: Slot,
    latents: Vec<Latent>,
    /// Constrained value slot per latent.
    x_slots: Vec<Slot>,
    guards: Vec<Guard>,
}

/// Per-caller buffers for [`LogDensityFn`] evaluation.
#[derive(Clone, Debug, Default)]
pub struct Scratch {
    values: Vec<f64>,
    adjoints: Vec<f64>,
}

impl LogDensityFn {
    /// Compiles the log joint of `model` over its live unobserved nodes.
    pub fn new(model: &GraphicalModel) -> Result<Self, GradError> {
        let latent_ids = model.latents();
        let mut latents = Vec::with_capacity(latent_ids.len());
        for &id in &latent_ids {
            let node = model.node(id);
            let kind = BijectionKind::of(node.dist.family).map_err(|_| GradError::DiscreteLatent {
                name: node.name.clone(),
                family: node.dist.family,
            })?;
            latents.push(Latent {
                id,
                name: node.name.clone(),
                family: node.dist.family,
                kind,
            });
        }
        let coord: HashMap<NodeId, usize> = latent_ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
        let mut b = Builder {
            model,
            tape: Vec::new(),
            consts: HashMap::new(),
            memo: HashMap::new(),
            vars: HashMap::new(),
            logs: HashMap::new(),
            guards: Vec::new(),
        };
        let mut x_slots = vec![0; latents.len()];
        let mut total = b.konst(0.0);
        for id in model.topo_order()? {
            let node = model.node(id);
            let params: Vec<Slot> = node.dist.params.iter().map(|&p| b.expr(p)).collect();
            let x = match node.observed {
                Some(v) => {
                    let x = b.konst(v);
                    b.support_guards(node.dist.family, &params, x);
                    x
                }
                None => {
                    let i = coord[&id];
                    let u = b.push(Inst::Input(i));
                    let (x, logjac) = match latents[i].kind {
                        BijectionKind::Identity => (u, None),
                        BijectionKind::Log => (b.un(Unary::Exp, u), Some(u)),
                        BijectionKind::LogAboveParam0 => {
                            let e = b.un(Unary::Exp, u);
                            (b.add(params[0], e), Some(u))
                        }
                        BijectionKind::UnitLogit | BijectionKind::LogitBetweenParams => {
                            // log s(u) = -softplus(-u), log(1 - s(u)) = -softplus(u)
                            let nu = b.un(Unary::Neg, u);
                            let spn = b.un(Unary::Softplus, nu);
                            let sp = b.un(Unary::Softplus, u);
                            let log_s = b.un(Unary::Neg, spn);
                            let log_1ms = b.un(Unary::Neg, sp);
                            let s = b.un(Unary::Exp, log_s);
                            let lj = b.add(log_s, log_1ms);
                            if latents[i].kind == BijectionKind::UnitLogit {
                                b.logs.insert(s, (log_s, log_1ms));
                                (s, Some(lj))
                            } else {
                                let w = b.sub(params[1], params[0]);
                                let ws = b.mul(w, s);
                                let x = b.add(params[0], ws);
                                let lw = b.log(w);
                                (x, Some(b.add(lw, lj)))
                            }
                        }
                    };
                    x_slots[i] = x;
                    if let Some(lj) = logjac {
                        total = b.add(total, lj);
                    }
                    x
                }
            };
            b.vars.insert(id, x);
            let lp = b.log_density(node.dist.family, &params, x);
            total = b.add(total, lp);
        }
        Ok(LogDensityFn {
            tape: b.tape,
            output: total,
            latents,
            x_slots,
            guards: b.guards,
        })
    }

    pub fn dim(&self) -> usize {
        self.latents.len()
    }

    pub fn latents(&self) -> &[Latent] {
        &self.latents
    }

    pub fn tape_len(&self) -> usize {
        self.tape.len()
    }

    fn forward(&self, u: &[f64], s: &mut Scratch) -> f64 {
        assert_eq!(u.len(), self.dim(), "point has the wrong dimension");
        s.values.resize(self.tape.len(), 0.0);
        let vals = &mut s.values;
        for (i, inst) in self.tape.iter().enumerate() {
            vals[i] = match *inst {
                Inst::Input(k) => u[k],
                Inst::Const(c) => c,
                Inst::Unary(op, a) => op.apply(vals[a as usize]),
                Inst::Binary(op, a, b) => op.apply(vals[a as usize], vals[b as usize]),
            };
        }
        let ok = self.guards.iter().all(|g| match *g {
            Guard::NonNegative(slot) => vals[slot as usize] >= 0.0,
            Guard::Integer(slot) => vals[slot as usize].fract() == 0.0,
        });
        let lp = vals[self.output as usize];
        if ok && lp.is_finite() {
            lp
        } else {
            f64::NEG_INFINITY
        }
    }

    /// Log density at `u` (including Jacobian terms).
    pub fn logp(&self, u: &[f64], s: &mut Scratch) -> f64 {
        self.forward(u, s)
    }

    /// Log density and its gradient. When the density is not finite the
    /// gradient is left as zeros.
    pub fn logp_grad(&self, u: &[f64], grad: &mut [f64], s: &mut Scratch) -> f64 {
        let lp = self.forward(u, s);
        grad.iter_mut().for_each(|g| *g = 0.0);
        if !lp.is_finite() {
            return lp;
        }
        s.adjoints.clear();
        s.adjoints.resize(self.tape.len(), 0.0);
        let (vals, adj) = (&s.values, &mut s.adjoints);
        adj[self.output as usize] = 1.0;
        for i in (0..=self.output as usize).rev() {
            let g = adj[i];
            if g == 0.0 {
                continue;
            }
            match self.tape[i] {
                Inst::Input(k) => grad[k] += g,
                Inst::Const(_) => {}
                Inst::Unary(op, a) => {
                    let a = a as usize;
                    adj[a] += g * op.deriv(vals[a], vals[i]);
                }
                Inst::Binary(op, a, b) => {
                    let (a, b) = (a as usize, b as usize);
                    match op {
                        Binary::Add => {
                            adj[a] += g;
                            adj[b] += g;
                        }
                        Binary::Sub => {
                            adj[a] += g;
                            adj[b] -= g;
                        }
                        Binary::Mul => {
                            adj[a] += g * vals[b];
                            adj[b] += g * vals[a];
                        }
                        Binary::Div => {
                            adj[a] += g / vals[b];
                            adj[b] -= g * vals[i] / vals[b];
                        }
                        Binary::LnRising => {
                            adj[a] += g * digamma_diff(vals[a], vals[b]);
                            adj[b] += g * digamma(vals[a] + vals[b]);
                        }
                    }
                }
            }
        }
        lp
    }

    /// Allocating convenience wrapper around [`logp_grad`](Self::logp_grad).
    pub fn eval(&self, u: &[f64]) -> (f64, Vec<f64>) {
        let mut grad = vec![0.0; self.dim()];
        let lp = self.logp_grad(u, &mut grad, &mut Scratch::default());
        (lp, grad)
    }

    /// Constrained latent values at `u`, in latent order.
    pub fn constrain(&self, u: &[f64], s: &mut Scratch) -> Vec<f64> {
        self.forward(u, s);
        self.x_slots.iter().map(|&x| s.values[x as usize]).collect()
    }

    /// Constrained latent values at `u` as an assignment.
    pub fn assignment(&self, u: &[f64]) -> Assignment {
        let x = self.constrain(u, &mut Scratch::default());
        self.latents.iter().zip(x).map(|(l, v)| (l.id, v)).collect()
    }

    /// Inverse of [`assignment`](Self::assignment): unconstrained point of
    /// an assignment to the latents.
    pub fn unconstrain(&self, model: &GraphicalModel, a: &Assignment) -> Result<Vec<f64>, GradError> {
        let mut eval = crate::compgraph::Evaluator::new(model.graph());
        self.latents
            .iter()
            .map(|l| {
                let params = model.eval_params(&mut eval, l.id, a)?;
                let bij = crate::dists::unconstraining(l.family, &params).map_err(|source| ModelError::Dist {
                    node: l.name.clone(),
                    source,
                })?;
                let x = a.get(l.id).ok_or_else(|| ModelError::MissingValue(l.name.clone()))?;
                Ok(bij.forward(x))
            })
            .collect()
    }
}

/// Bijection for one latent at a given assignment (for reporting).
pub fn bijection_at(model: &GraphicalModel, id: NodeId, a: &Assignment) -> Result<Bijection, GradError> {
    let mut eval = crate::compgraph::Evaluator::new(model.graph());
    let node = model.node(id);
    let params = model.eval_params(&mut eval, id, a)?;
    crate::dists::unconstraining(node.dist.family, &params).map_err(|source| {
        GradError::Model(ModelError::Dist {
            node: node.name.clone(),
            source,
        })
    })
}

/// Largest relative discrepancy between the reverse-mode gradient and
/// central finite differences with step `h`, using
/// `|a - b| / max(|a|, |b|, 1)`.
pub fn gradient_check(f: &LogDensityFn, point: &[f64], h: f64) -> f64 {
    assert!(h > 0.0, "step must be positive");
    let mut s = Scratch::default();
    let mut grad = vec![0.0; f.dim()];
    f.logp_grad(point, &mut grad, &mut s);
    let mut x = point.to_vec();
    let mut worst: f64 = 0.0;
    for i in 0..f.dim() {
        x[i] = point[i] + h;
        let up = f.logp(&x, &mut s);
        x[i] = point[i] - h;
        let down = f.logp(&x, &mut s);
        x[i] = point[i];
        let fd = (up - down) / (2.0 * h);
        let err = (fd - grad[i]).abs() / fd.abs().max(grad[i].abs()).max(1.0);
        worst = worst.max(if err.is_nan() { f64::INFINITY } else { err });
    }
    worst
}
