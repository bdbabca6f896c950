//! Conjugacy detection, edge reversal, marginalization with recovery, and
//! the non-centered reparameterization used as a baseline.

use std::collections::BTreeSet;
use std::fmt;

use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::analysis::{AnalysisCache, AnalysisError};
use crate::compgraph::{EvalError, Evaluator, ExprError, ExprGraph, ExprRef};
use crate::dists::{self, DistError, Family};
use crate::model::{Assignment, Dist, GraphicalModel, ModelError, NodeId};

/// How the child's target parameter must relate to the prior variable.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Condition {
    Affine,
    Linear,
    /// The parameter is exactly the prior variable's input node.
    Identity,
}

/// One row of the conjugacy table.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct ConjugacyPattern {
    pub prior: Family,
    pub likelihood: Family,
    pub condition: Condition,
    /// Parameter slot of the child that `condition` applies to.
    pub slot: usize,
    /// Parameter slot of the child that must not depend on the prior.
    pub independent_slot: Option<usize>,
}

impl ConjugacyPattern {
    pub fn name(&self) -> String {
        format!("{}/{}", self.prior, self.likelihood)
    }
}

impl fmt::Display for ConjugacyPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.prior, self.likelihood)
    }
}

pub const PATTERNS: [ConjugacyPattern; 5] = [
    ConjugacyPattern {
        prior: Family::Normal,
        likelihood: Family::Normal,
        condition: Condition::Affine,
        slot: 0,
        independent_slot: Some(1),
    },
    ConjugacyPattern {
        prior: Family::Gamma,
        likelihood: Family::Gamma,
        condition: Condition::Linear,
        slot: 1,
        independent_slot: Some(0),
    },
    ConjugacyPattern {
        prior: Family::Gamma,
        likelihood: Family::Exponential,
        condition: Condition::Linear,
        slot: 0,
        independent_slot: None,
    },
    ConjugacyPattern {
        prior: Family::Beta,
        likelihood: Family::Binomial,
        condition: Condition::Identity,
        slot: 1,
        independent_slot: Some(0),
    },
    ConjugacyPattern {
        prior: Family::Beta,
        likelihood: Family::Bernoulli,
        condition: Condition::Identity,
        slot: 0,
        independent_slot: None,
    },
];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TransformError {
    #[error("{v} is not locally conjugate to {c}")]
    NotConjugate { v: String, c: String },
    #[error("reversing {v} -> {c} would form a cycle: another path connects them")]
    WouldCreateCycle { v: String, c: String },
    #[error("{0} is observed")]
    Observed(String),
    #[error("{name} has family {family}; the non-centered form needs Normal")]
    NotNormal { name: String, family: Family },
    #[error("recovering {node}: {source}")]
    Recovery { node: String, source: RecoveryError },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Expr(#[from] ExprError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RecoveryError {
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Dist(#[from] DistError),
}

/// The conjugacy-table row matching `v -> c`, if any.
pub fn conjugate(
    model: &GraphicalModel,
    cache: &mut AnalysisCache,
    v: NodeId,
    c: NodeId,
) -> Option<&'static ConjugacyPattern> {
    let (vn, cn) = (model.node(v), model.node(c));
    if !cn.parents.contains(&v) {
        return None;
    }
    let g = model.graph();
    let row = PATTERNS
        .iter()
        .find(|r| r.prior == vn.dist.family && r.likelihood == cn.dist.family)?;
    let target = cn.dist.params[row.slot];
    let ok = match row.condition {
        Condition::Affine => cache.affine(g, target, v),
        Condition::Linear => cache.linear(g, target, v),
        Condition::Identity => g.input_ref(v) == Some(target),
    };
    let independent = row
        .independent_slot
        .is_none_or(|s| !cache.dependent(g, cn.dist.params[s], v));
    (ok && independent).then_some(row)
}

/// Is there a path `v ~> c` that avoids the direct edge?
fn has_indirect_path(model: &GraphicalModel, v: NodeId, c: NodeId) -> bool {
    let mut stack: Vec<NodeId> = model.node(c).parents.iter().copied().filter(|&p| p != v).collect();
    let mut seen = BTreeSet::new();
    while let Some(n) = stack.pop() {
        if n == v {
            return true;
        }
        if seen.insert(n) {
            stack.extend(model.node(n).parents.iter().copied());
        }
    }
    false
}

/// One edge reversal, as reported by `--explain`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReversalEvent {
    pub v: String,
    pub c: String,
    pub pattern: String,
    #[serde(skip)]
    pub v_id: NodeId,
    #[serde(skip)]
    pub c_id: NodeId,
}

impl fmt::Display for ReversalEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.v, self.c, self.pattern)
    }
}

/// Reverses the edge `v -> c` in place, leaving `c` distributed by its
/// marginal and `v` by its conditional given `c`.
pub fn reverse(
    model: &mut GraphicalModel,
    cache: &mut AnalysisCache,
    v: NodeId,
    c: NodeId,
) -> Result<ReversalEvent, TransformError> {
    let names = || (model.name(v).to_string(), model.name(c).to_string());
    let Some(row) = conjugate(model, cache, v, c) else {
        let (v, c) = names();
        return Err(TransformError::NotConjugate { v, c });
    };
    if has_indirect_path(model, v, c) {
        let (v, c) = names();
        return Err(TransformError::WouldCreateCycle { v, c });
    }
    let vp = model.node(v).dist.params.clone();
    let cp = model.node(c).dist.params.clone();
    let (new_c, new_v) = match (row.prior, row.likelihood) {
        (Family::Normal, Family::Normal) => {
            let (mu_v, var_v) = (vp[0], vp[1]);
            let var_c = cp[1];
            let (p, q) = cache.affine_coeff(model.graph_mut(), cp[0], v)?;
            let xc = model.input(c);
            let g = model.graph_mut();
            let p2 = g.square(p)?;
            let p2v = g.mul(p2, var_v)?;
            let s = g.add(p2v, var_c)?;
            let pm = g.mul(p, mu_v)?;
            let mu_c = g.add(pm, q)?;
            let vp_ = g.mul(var_v, p)?;
            let k = g.div(vp_, s)?;
            let resid = g.sub(xc, mu_c)?;
            let shift = g.mul(k, resid)?;
            let mu_v2 = g.add(mu_v, shift)?;
            // Equal to (1 - k p) var_v, without the cancellation.
            let vv = g.mul(var_v, var_c)?;
            let var_v2 = g.div(vv, s)?;
            (
                Dist::new(Family::Normal, vec![mu_c, s]),
                Dist::new(Family::Normal, vec![mu_v2, var_v2]),
            )
        }
        (Family::Beta, lik) => {
            let (alpha, beta) = (vp[0], vp[1]);
            let xc = model.input(c);
            let g = model.graph_mut();
            let n = if lik == Family::Binomial { cp[0] } else { g.one() };
            let a2 = g.add(alpha, xc)?;
            let fails = g.sub(n, xc)?;
            let b2 = g.add(beta, fails)?;
            (
                Dist::new(Family::BetaBinomial, vec![n, alpha, beta]),
                Dist::new(Family::Beta, vec![a2, b2]),
            )
        }
        (Family::Gamma, lik) => {
            let (alpha_v, beta_v) = (vp[0], vp[1]);
            let (alpha_c, rate_c) = if lik == Family::Gamma {
                (cp[0], cp[1])
            } else {
                (model.graph_mut().one(), cp[0])
            };
            let (p, q) = cache.affine_coeff(model.graph_mut(), rate_c, v)?;
            assert!(
                model.graph().is_zero(q),
                "linear rate must have a literal zero intercept"
            );
            let xc = model.input(c);
            let g = model.graph_mut();
            let a2 = g.add(alpha_v, alpha_c)?;
            let px = g.mul(p, xc)?;
            let b2 = g.add(beta_v, px)?;
            let scale = g.div(beta_v, p)?;
            (
                Dist::new(Family::CompoundGamma, vec![alpha_c, alpha_v, scale]),
                Dist::new(Family::Gamma, vec![a2, b2]),
            )
        }
        _ => unreachable!("conjugacy table rows are exhaustive"),
    };
    model.set_dist(c, new_c)?;
    model.set_dist(v, new_v)?;
    debug_assert!(model.topo_order().is_ok());
    Ok(ReversalEvent {
        v: model.name(v).to_string(),
        c: model.name(c).to_string(),
        pattern: row.name(),
        v_id: v,
        c_id: c,
    })
}

#[derive(Clone, Debug)]
struct RecoveryEntry {
    id: NodeId,
    name: String,
    dist: Dist,
}

/// Marginalized nodes with their conditional distributions, for ancestral
/// re-sampling after inference.
#[derive(Clone, Debug, Default)]
pub struct RecoveryStack {
    entries: Vec<RecoveryEntry>,
    graph: ExprGraph,
    observed: Assignment,
}

impl RecoveryStack {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Marginalized node ids, bottom of the stack first.
    pub fn ids(&self) -> Vec<NodeId> {
        self.entries.iter().map(|e| e.id).collect()
    }

    /// Conditional distribution stored for `id`.
    pub fn dist(&self, id: NodeId) -> Option<&Dist> {
        self.entries.iter().find(|e| e.id == id).map(|e| &e.dist)
    }

    pub fn graph(&self) -> &ExprGraph {
        &self.graph
    }

    /// Fills in every marginalized node, popping the stack.
    ///
    /// `reduced` must hold the surviving latent values. Observed values it
    /// does not supply are taken from the model the stack was built from.
    pub fn recover<R: Rng + ?Sized>(&self, reduced: &Assignment, rng: &mut R) -> Result<Assignment, TransformError> {
        let mut eval = Evaluator::new(&self.graph);
        self.recover_with(&mut eval, reduced, rng)
    }

    /// Like [`recover`](Self::recover), reusing an evaluator built over
    /// [`graph`](Self::graph).
    pub fn recover_with<R: Rng + ?Sized>(
        &self,
        eval: &mut Evaluator<'_>,
        reduced: &Assignment,
        rng: &mut R,
    ) -> Result<Assignment, TransformError> {
        eval.reset();
        let mut out = reduced.clone();
        for (id, v) in self.observed.iter() {
            if out.get(id).is_none() {
                out.set(id, v);
            }
        }
        let mut params = Vec::with_capacity(3);
        for e in self.entries.iter().rev() {
            params.clear();
            for &p in &e.dist.params {
                let x = eval.eval(p, |v| out.get(v)).map_err(|err| TransformError::Recovery {
                    node: e.name.clone(),
                    source: err.into(),
                })?;
                params.push(x);
            }
            let x = dists::sample(e.dist.family, &params, rng).map_err(|err| TransformError::Recovery {
                node: e.name.clone(),
                source: err.into(),
            })?;
            out.set(e.id, x);
        }
        Ok(out)
    }
}

/// Result of [`marginalize`].
#[derive(Clone, Debug)]
pub struct Marginalized {
    pub model: GraphicalModel,
    pub stack: RecoveryStack,
    pub log: Vec<ReversalEvent>,
}

fn is_exempt(name: &str, exempt: &[glob::Pattern]) -> bool {
    exempt.iter().any(|p| p.matches(name))
}

/// Compiles node-name globs such as `mu_*`.
pub fn compile_globs(patterns: &[String]) -> Result<Vec<glob::Pattern>, glob::PatternError> {
    patterns.iter().map(|p| glob::Pattern::new(p)).collect()
}

/// Removes every unobserved node whose children are all locally conjugate
/// to it, reversing the edges to those children first.
///
/// Nodes whose names match a pattern in `exempt` are kept.
pub fn marginalize(model: &GraphicalModel, exempt: &[glob::Pattern]) -> Result<Marginalized, TransformError> {
    marginalize_impl(model, exempt, None)
}

/// [`marginalize`] that also calls `hook(before, after, event)` around every
/// reversal.
pub fn marginalize_inspect(
    model: &GraphicalModel,
    exempt: &[glob::Pattern],
    mut hook: impl FnMut(&GraphicalModel, &GraphicalModel, &ReversalEvent),
) -> Result<Marginalized, TransformError> {
    marginalize_impl(model, exempt, Some(&mut hook))
}

#[allow(clippy::type_complexity)]
fn marginalize_impl(
    model: &GraphicalModel,
    exempt: &[glob::Pattern],
    mut hook: Option<&mut dyn FnMut(&GraphicalModel, &GraphicalModel, &ReversalEvent)>,
) -> Result<Marginalized, TransformError> {
    let mut g = model.clone();
    let mut cache = AnalysisCache::new();
    let mut entries = Vec::new();
    let mut log = Vec::new();
    let order = g.topo_order()?;
    for &v in order.iter().rev() {
        if !g.is_live(v) || g.node(v).is_observed() || is_exempt(g.name(v), exempt) {
            continue;
        }
        cache.clear();
        let mut children = g.children(v);
        if !children.iter().all(|&c| conjugate(&g, &mut cache, v, c).is_some()) {
            continue;
        }
        let current = g.topo_order()?;
        let mut pos = vec![0; g.len()];
        for (i, id) in current.iter().enumerate() {
            pos[id.index()] = i;
        }
        children.sort_by_key(|c| pos[c.index()]);
        for c in children {
            let before = hook.as_ref().map(|_| g.clone());
            let event = reverse(&mut g, &mut cache, v, c)?;
            if let (Some(h), Some(before)) = (hook.as_mut(), before.as_ref()) {
                h(before, &g, &event);
            }
            log::debug!("reversed {event}");
            log.push(event);
        }
        entries.push(RecoveryEntry {
            id: v,
            name: g.name(v).to_string(),
            dist: g.node(v).dist.clone(),
        });
        g.remove(v)?;
    }
    let observed = g
        .live_nodes()
        .filter_map(|id| g.node(id).observed.map(|x| (id, x)))
        .collect();
    let stack = RecoveryStack {
        entries,
        graph: g.graph().clone(),
        observed,
    };
    Ok(Marginalized { model: g, stack, log })
}

/// Replaces the Normal node `v` by a standard normal `v_raw` and inlines
/// `mu_v + sqrt(var_v) * v_raw` into its children.
///
/// Returns the expression for the original variable in terms of the new
/// model's inputs.
pub fn reparam_noncentered(model: &mut GraphicalModel, v: NodeId) -> Result<ExprRef, TransformError> {
    let node = model.node(v).clone();
    if node.is_observed() {
        return Err(TransformError::Observed(node.name));
    }
    if node.dist.family != Family::Normal {
        return Err(TransformError::NotNormal {
            name: node.name,
            family: node.dist.family,
        });
    }
    let raw = model.input(v);
    let g = model.graph_mut();
    let sd = g.sqrt(node.dist.params[1])?;
    let scaled = g.mul(sd, raw)?;
    let x = g.add(node.dist.params[0], scaled)?;
    if x == raw {
        return Ok(raw);
    }
    for c in model.children(v) {
        let mut dist = model.node(c).dist.clone();
        for p in dist.params.iter_mut() {
            *p = model.graph_mut().substitute(*p, v, x)?;
        }
        model.set_dist(c, dist)?;
    }
    let g = model.graph_mut();
    let (zero, one) = (g.zero(), g.one());
    model.set_dist(v, Dist::new(Family::Normal, vec![zero, one]))?;
    model.rename(v, &format!("{}_raw", node.name))?;
    Ok(x)
}

/// Non-centered model together with the expressions recovering each
/// original variable.
#[derive(Clone, Debug)]
pub struct Reparameterized {
    pub model: GraphicalModel,
    /// `(node, original name, expression of the original value)`.
    pub derived: Vec<(NodeId, String, ExprRef)>,
}

impl Reparameterized {
    /// Original-space value of every latent node of the source model.
    pub fn original_values(&self, eval: &mut Evaluator<'_>, a: &Assignment) -> Result<Assignment, EvalError> {
        eval.reset();
        let mut out = a.clone();
        for &(id, _, e) in &self.derived {
            let x = eval.eval(e, |v| self.model.value(v, a))?;
            out.set(id, x);
        }
        Ok(out)
    }
}

/// Non-centers every unobserved Normal node that has at least one parent.
pub fn reparam_all(model: &GraphicalModel) -> Result<Reparameterized, TransformError> {
    let mut m = model.clone();
    let mut derived = Vec::new();
    for v in m.topo_order()? {
        let node = m.node(v);
        if node.is_observed() || node.dist.family != Family::Normal || node.parents.is_empty() {
            continue;
        }
        let name = node.name.clone();
        let x = reparam_noncentered(&mut m, v)?;
        derived.push((v, name, x));
    }
    Ok(Reparameterized { model: m, derived })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ObservedMode;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn normal(m: &mut GraphicalModel, name: &str, mean: ExprRef, var: ExprRef) -> NodeId {
        m.add_node(name, Family::Normal, &[mean, var]).unwrap()
    }

    fn c(m: &mut GraphicalModel, v: f64) -> ExprRef {
        m.constant(v).unwrap()
    }

    #[test]
    fn unit_normal_pair() {
        let mut m = GraphicalModel::new();
        let (z, one) = (c(&mut m, 0.0), c(&mut m, 1.0));
        let x = normal(&mut m, "x", z, one);
        let xi = m.input(x);
        let y = normal(&mut m, "y", xi, one);
        let mut cache = AnalysisCache::new();
        let ev = reverse(&mut m, &mut cache, x, y).unwrap();
        assert_eq!(ev.to_string(), "(x, y, Normal/Normal)");
        let g = m.graph();
        let yd = &m.node(y).dist;
        assert!(g.is_zero(yd.params[0]));
        assert_eq!(g.as_const(yd.params[1]), Some(2.0));
        let a: Assignment = [(x, 0.3), (y, 1.4)].into_iter().collect();
        let mut ev = Evaluator::new(g);
        let p = m.eval_params(&mut ev, x, &a).unwrap();
        assert!((p[0] - 0.7).abs() < 1e-15 && (p[1] - 0.5).abs() < 1e-15);
        assert!(m.node(x).parents.contains(&y));
        assert!(m.node(y).parents.is_empty());
    }

    #[test]
    fn beta_bernoulli_reversal() {
        let mut m = GraphicalModel::new();
        let one = c(&mut m, 1.0);
        let th = m.add_node("theta", Family::Beta, &[one, one]).unwrap();
        let ti = m.input(th);
        let y = m.add_node("y", Family::Bernoulli, &[ti]).unwrap();
        m.observe(y, 1.0).unwrap();
        let mut cache = AnalysisCache::new();
        reverse(&mut m, &mut cache, th, y).unwrap();
        assert_eq!(m.node(y).dist.family, Family::BetaBinomial);
        let mut ev = Evaluator::new(m.graph());
        let a = Assignment::new();
        assert_eq!(m.eval_params(&mut ev, y, &a).unwrap(), vec![1.0, 1.0, 1.0]);
        assert_eq!(m.eval_params(&mut ev, th, &a).unwrap(), vec![2.0, 1.0]);
    }

    #[test]
    fn nonconjugate_variance() {
        let mut m = GraphicalModel::new();
        let (z, one) = (c(&mut m, 0.0), c(&mut m, 1.0));
        let x = normal(&mut m, "x", z, one);
        let xi = m.input(x);
        let x2 = m.graph_mut().square(xi).unwrap();
        let y = normal(&mut m, "y", xi, x2);
        let mut cache = AnalysisCache::new();
        assert!(conjugate(&m, &mut cache, x, y).is_none());
        assert!(matches!(
            reverse(&mut m, &mut cache, x, y),
            Err(TransformError::NotConjugate { .. })
        ));
    }

    /// v -> c1 -> c2 and v -> c2.
    fn motif() -> (GraphicalModel, NodeId, NodeId, NodeId) {
        let mut m = GraphicalModel::new();
        let (z, one) = (c(&mut m, 0.0), c(&mut m, 1.0));
        let v = normal(&mut m, "v", z, one);
        let vi = m.input(v);
        let c1 = normal(&mut m, "c1", vi, one);
        let c1i = m.input(c1);
        let s = m.graph_mut().add(vi, c1i).unwrap();
        let c2 = normal(&mut m, "c2", s, one);
        (m, v, c1, c2)
    }

    #[test]
    fn wrong_child_order_forms_cycle() {
        let (mut m, v, c1, c2) = motif();
        let mut cache = AnalysisCache::new();
        assert!(matches!(
            reverse(&mut m, &mut cache, v, c2),
            Err(TransformError::WouldCreateCycle { .. })
        ));
        reverse(&mut m, &mut cache, v, c1).unwrap();
        reverse(&mut m, &mut cache, v, c2).unwrap();
        m.topo_order().unwrap();
    }

    #[test]
    fn marginalize_motif() {
        let (m, v, c1, c2) = motif();
        let out = marginalize(&m, &[]).unwrap();
        // Everything is Gaussian with no observations, so all three go.
        assert!(out.model.latents().is_empty());
        assert_eq!(out.stack.len(), 3);
        assert_eq!(out.stack.ids(), vec![c2, c1, v]);
    }

    #[test]
    fn conjugacy_free_model_is_untouched() {
        let mut m = GraphicalModel::new();
        let (z, five, one) = (c(&mut m, 0.0), c(&mut m, 5.0), c(&mut m, 1.0));
        let mu = m.add_node("mu", Family::Cauchy, &[z, five]).unwrap();
        let mi = m.input(mu);
        let y = normal(&mut m, "y", mi, one);
        m.observe(y, 0.5).unwrap();
        let out = marginalize(&m, &[]).unwrap();
        assert!(out.log.is_empty() && out.stack.is_empty());
        assert_eq!(out.model.dump(), m.dump());
    }

    #[test]
    fn exemption_globs() {
        let (m, v, _, _) = motif();
        let ex = compile_globs(&["v*".to_string()]).unwrap();
        let out = marginalize(&m, &ex).unwrap();
        assert_eq!(out.model.latents(), vec![v]);
    }

    #[test]
    fn recover_empty_stack_is_identity() {
        let mut m = GraphicalModel::new();
        let (z, five) = (c(&mut m, 0.0), c(&mut m, 5.0));
        let mu = m.add_node("mu", Family::Cauchy, &[z, five]).unwrap();
        let mi = m.input(mu);
        let one = c(&mut m, 1.0);
        let y = normal(&mut m, "y", mi, one);
        m.observe(y, 0.5).unwrap();
        let out = marginalize(&m, &[]).unwrap();
        assert!(out.stack.is_empty());
        let a: Assignment = [(mu, 1.5)].into_iter().collect();
        let r = out.stack.recover(&a, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(r, [(mu, 1.5), (y, 0.5)].into_iter().collect());
    }

    #[test]
    fn gamma_exponential_reversal() {
        let mut m = GraphicalModel::new();
        let (two, three) = (c(&mut m, 2.0), c(&mut m, 3.0));
        let lam = m.add_node("lam", Family::Gamma, &[two, three]).unwrap();
        let li = m.input(lam);
        let four = c(&mut m, 4.0);
        let rate = m.graph_mut().mul(four, li).unwrap();
        let y = m.add_node("y", Family::Exponential, &[rate]).unwrap();
        m.observe(y, 0.5).unwrap();
        let out = marginalize(&m, &[]).unwrap();
        let yd = &out.model.node(y).dist;
        assert_eq!(yd.family, Family::CompoundGamma);
        let mut ev = Evaluator::new(out.model.graph());
        let p = out.model.eval_params(&mut ev, y, &Assignment::new()).unwrap();
        assert_eq!(p, vec![1.0, 2.0, 0.75]);
        let d = out.stack.dist(lam).unwrap();
        let mut ev = Evaluator::new(out.stack.graph());
        let obs = |id: NodeId| (id == y).then_some(0.5);
        assert_eq!(ev.eval(d.params[0], obs).unwrap(), 3.0);
        assert_eq!(ev.eval(d.params[1], obs).unwrap(), 5.0);
    }

    #[test]
    fn reparam_of_standard_normal_root_is_identity() {
        let mut m = GraphicalModel::new();
        let (z, one) = (c(&mut m, 0.0), c(&mut m, 1.0));
        let x = normal(&mut m, "x", z, one);
        let xi = m.input(x);
        let y = normal(&mut m, "y", xi, one);
        let before = m.node(y).dist.clone();
        let e = reparam_noncentered(&mut m, x).unwrap();
        assert_eq!(e, xi);
        assert_eq!(m.node(y).dist, before);
    }

    #[test]
    fn reparam_preserves_joint_up_to_jacobian() {
        let mut m = GraphicalModel::new();
        let (z, one, four) = (c(&mut m, 0.0), c(&mut m, 1.0), c(&mut m, 4.0));
        let mu = normal(&mut m, "mu", z, four);
        let tau = m.add_node("tau", Family::HalfCauchy, &[one]).unwrap();
        let (mi, ti) = (m.input(mu), m.input(tau));
        let t2 = m.graph_mut().square(ti).unwrap();
        let x = normal(&mut m, "x", mi, t2);
        let xi = m.input(x);
        let y = normal(&mut m, "y", xi, one);
        m.observe(y, 1.2).unwrap();
        let r = reparam_all(&m).unwrap();
        assert_eq!(r.derived.len(), 1);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut ev = Evaluator::new(r.model.graph());
        for _ in 0..100 {
            let a = r.model.forward_sample(&mut rng, ObservedMode::Clamp).unwrap();
            let orig = r.original_values(&mut ev, &a).unwrap();
            let sigma = a.get(tau).unwrap();
            let lhs = m.log_joint(&orig).unwrap();
            let rhs = r.model.log_joint(&a).unwrap() - sigma.ln();
            assert!((lhs - rhs).abs() < 1e-10 * lhs.abs().max(1.0), "{lhs} vs {rhs}");
        }
    }
}
