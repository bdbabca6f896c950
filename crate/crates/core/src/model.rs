//! Directed graphical models whose conditional parameters live in a shared
//! [`ExprGraph`].

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use rand::Rng;
use thiserror::Error;

use crate::compgraph::{EvalError, Evaluator, ExprError, ExprGraph, ExprNode, ExprRef};
use crate::dists::{self, DistError, Family};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(u32);

impl NodeId {
    pub fn new(index: usize) -> Self {
        NodeId(u32::try_from(index).expect("node index overflow"))
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "x{}", self.0)
    }
}

/// A distribution family with symbolic parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Dist {
    pub family: Family,
    pub params: Vec<ExprRef>,
}

impl Dist {
    pub fn new(family: Family, params: Vec<ExprRef>) -> Self {
        Dist { family, params }
    }
}

#[derive(Clone, Debug)]
pub struct Node {
    pub name: String,
    pub dist: Dist,
    pub parents: BTreeSet<NodeId>,
    pub observed: Option<f64>,
    removed: bool,
}

impl Node {
    pub fn is_observed(&self) -> bool {
        self.observed.is_some()
    }

    pub fn is_removed(&self) -> bool {
        self.removed
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("node {node} references {var}, which is not a live node of the model")]
    DanglingInput { node: String, var: NodeId },
    #[error("duplicate node name {0:?}")]
    DuplicateName(String),
    #[error("no node named {0:?}")]
    UnknownName(String),
    #[error("{0} is not a live node")]
    UnknownNode(NodeId),
    #[error("cannot observe {node} = {value}: outside the support of {family}")]
    OutOfSupport { node: String, value: f64, family: Family },
    #[error("the parent relation has a cycle")]
    Cycle,
    #[error("no value for latent node {0}")]
    MissingValue(String),
    #[error("node {node}: {source}")]
    Dist { node: String, source: DistError },
    #[error("node {node}: {source}")]
    Eval { node: String, source: EvalError },
    #[error(transparent)]
    Expr(#[from] ExprError),
}

/// Values for (a subset of) the nodes of a model, indexed by [`NodeId`].
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Assignment {
    values: Vec<Option<f64>>,
}

impl Assignment {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, id: NodeId) -> Option<f64> {
        self.values.get(id.index()).copied().flatten()
    }

    pub fn set(&mut self, id: NodeId, value: f64) {
        if self.values.len() <= id.index() {
            self.values.resize(id.index() + 1, None);
        }
        self.values[id.index()] = Some(value);
    }

    pub fn remove(&mut self, id: NodeId) {
        if let Some(v) = self.values.get_mut(id.index()) {
            *v = None;
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (NodeId, f64)> + '_ {
        self.values
            .iter()
            .enumerate()
            .filter_map(|(i, v)| v.map(|v| (NodeId::new(i), v)))
    }

    pub fn len(&self) -> usize {
        self.values.iter().filter(|v| v.is_some()).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl FromIterator<(NodeId, f64)> for Assignment {
    fn from_iter<T: IntoIterator<Item = (NodeId, f64)>>(iter: T) -> Self {
        let mut a = Assignment::new();
        for (id, v) in iter {
            a.set(id, v);
        }
        a
    }
}

/// How [`GraphicalModel::forward_sample`] treats observed nodes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ObservedMode {
    /// Use the stored observation.
    Clamp,
    /// Draw a fresh value (prior predictive).
    Resample,
}

#[derive(Clone, Debug, Default)]
pub struct GraphicalModel {
    graph: ExprGraph,
    nodes: Vec<Node>,
    names: HashMap<String, NodeId>,
}

impl GraphicalModel {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn graph(&self) -> &ExprGraph {
        &self.graph
    }

    /// The shared expression graph, for building parameter expressions.
    pub fn graph_mut(&mut self) -> &mut ExprGraph {
        &mut self.graph
    }

    /// Shorthand for `graph_mut().input(id)`.
    pub fn input(&mut self, id: NodeId) -> ExprRef {
        self.graph.input(id)
    }

    /// Shorthand for `graph_mut().constant(value)`.
    pub fn constant(&mut self, value: f64) -> Result<ExprRef, ExprError> {
        self.graph.constant(value)
    }

    /// Every slot ever allocated, including removed nodes.
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id.index()]
    }

    pub fn name(&self, id: NodeId) -> &str {
        &self.nodes[id.index()].name
    }

    pub fn id(&self, name: &str) -> Result<NodeId, ModelError> {
        self.names
            .get(name)
            .copied()
            .ok_or_else(|| ModelError::UnknownName(name.to_string()))
    }

    pub fn is_live(&self, id: NodeId) -> bool {
        self.nodes.get(id.index()).is_some_and(|n| !n.removed)
    }

    /// Live nodes in ascending id order.
    pub fn live_nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.nodes.len())
            .map(NodeId::new)
            .filter(|&id| !self.nodes[id.index()].removed)
    }

    /// Live unobserved nodes in ascending id order.
    pub fn latents(&self) -> Vec<NodeId> {
        self.live_nodes().filter(|&id| !self.node(id).is_observed()).collect()
    }

    /// Live nodes that list `id` as a parent.
    pub fn children(&self, id: NodeId) -> Vec<NodeId> {
        self.live_nodes()
            .filter(|&c| self.node(c).parents.contains(&id))
            .collect()
    }

    fn parents_of(&self, name: &str, params: &[ExprRef]) -> Result<BTreeSet<NodeId>, ModelError> {
        let parents = self.graph.reachable_inputs(params);
        for &p in &parents {
            if !self.is_live(p) {
                return Err(ModelError::DanglingInput {
                    node: name.to_string(),
                    var: p,
                });
            }
        }
        Ok(parents)
    }

    fn check_dist(&self, dist: &Dist) -> Result<(), ModelError> {
        if dist.params.len() != dist.family.arity() {
            return Err(ModelError::Dist {
                node: String::new(),
                source: DistError::Arity {
                    family: dist.family,
                    expected: dist.family.arity(),
                    got: dist.params.len(),
                },
            });
        }
        for &p in &dist.params {
            if p.index() >= self.graph.len() {
                return Err(ExprError::DanglingRef(p).into());
            }
        }
        Ok(())
    }

    /// Appends a node. Parents are the inputs reachable from `params`.
    pub fn add_node(&mut self, name: &str, family: Family, params: &[ExprRef]) -> Result<NodeId, ModelError> {
        if self.names.contains_key(name) {
            return Err(ModelError::DuplicateName(name.to_string()));
        }
        let dist = Dist::new(family, params.to_vec());
        self.check_dist(&dist).map_err(|e| name_dist_error(e, name))?;
        let parents = self.parents_of(name, params)?;
        let id = NodeId::new(self.nodes.len());
        self.nodes.push(Node {
            name: name.to_string(),
            dist,
            parents,
            observed: None,
            removed: false,
        });
        self.names.insert(name.to_string(), id);
        Ok(id)
    }

    /// Marks `id` as observed with `value`.
    ///
    /// Support bounds that depend on other nodes (a Binomial count bounded
    /// by a latent `n`) can only be checked when the bound is a literal.
    pub fn observe(&mut self, id: NodeId, value: f64) -> Result<(), ModelError> {
        if !self.is_live(id) {
            return Err(ModelError::UnknownNode(id));
        }
        let node = &self.nodes[id.index()];
        let family = node.dist.family;
        let literal: Option<Vec<f64>> = node.dist.params.iter().map(|&p| self.graph.as_const(p)).collect();
        let ok = match literal {
            Some(params) => family.in_support(&params, value),
            None => family.in_base_support(value),
        };
        if !ok {
            return Err(ModelError::OutOfSupport {
                node: node.name.clone(),
                value,
                family,
            });
        }
        self.nodes[id.index()].observed = Some(value);
        Ok(())
    }

    /// Replaces the distribution of a live node and recomputes its parents.
    pub fn set_dist(&mut self, id: NodeId, dist: Dist) -> Result<(), ModelError> {
        if !self.is_live(id) {
            return Err(ModelError::UnknownNode(id));
        }
        let name = self.nodes[id.index()].name.clone();
        self.check_dist(&dist).map_err(|e| name_dist_error(e, &name))?;
        let parents = self.parents_of(&name, &dist.params)?;
        let node = &mut self.nodes[id.index()];
        node.dist = dist;
        node.parents = parents;
        Ok(())
    }

    /// Renames a live node.
    pub fn rename(&mut self, id: NodeId, name: &str) -> Result<(), ModelError> {
        if self.names.contains_key(name) {
            return Err(ModelError::DuplicateName(name.to_string()));
        }
        let old = std::mem::replace(&mut self.nodes[id.index()].name, name.to_string());
        self.names.remove(&old);
        self.names.insert(name.to_string(), id);
        Ok(())
    }

    /// Tombstones `id`. Fails if a live node still depends on it.
    pub fn remove(&mut self, id: NodeId) -> Result<(), ModelError> {
        if !self.is_live(id) {
            return Err(ModelError::UnknownNode(id));
        }
        if let Some(c) = self.children(id).first() {
            return Err(ModelError::DanglingInput {
                node: self.name(*c).to_string(),
                var: id,
            });
        }
        self.nodes[id.index()].removed = true;
        Ok(())
    }

    /// Topological order of the live nodes (Kahn, ties by ascending id).
    pub fn topo_order(&self) -> Result<Vec<NodeId>, ModelError> {
        let n = self.nodes.len();
        let mut indegree = vec![0usize; n];
        let mut children: Vec<Vec<NodeId>> = vec![Vec::new(); n];
        let mut live = 0;
        for id in self.live_nodes() {
            live += 1;
            for &p in &self.node(id).parents {
                indegree[id.index()] += 1;
                children[p.index()].push(id);
            }
        }
        let mut ready: BTreeSet<NodeId> = self.live_nodes().filter(|id| indegree[id.index()] == 0).collect();
        let mut order = Vec::with_capacity(live);
        while let Some(id) = ready.pop_first() {
            order.push(id);
            for &c in &children[id.index()] {
                indegree[c.index()] -= 1;
                if indegree[c.index()] == 0 {
                    ready.insert(c);
                }
            }
        }
        if order.len() == live {
            Ok(order)
        } else {
            Err(ModelError::Cycle)
        }
    }

    /// Checks that every live node's parent set equals the inputs reachable
    /// from its parameters and that those inputs are live.
    pub fn check_parents(&self) -> Result<(), ModelError> {
        for id in self.live_nodes() {
            let node = self.node(id);
            let reach = self.parents_of(&node.name, &node.dist.params)?;
            if reach != node.parents {
                return Err(ModelError::DanglingInput {
                    node: node.name.clone(),
                    var: reach.symmetric_difference(&node.parents).next().copied().unwrap_or(id),
                });
            }
        }
        Ok(())
    }

    /// Value of `id` under `assignment`, preferring the stored observation.
    pub fn value(&self, id: NodeId, assignment: &Assignment) -> Option<f64> {
        self.nodes
            .get(id.index())
            .and_then(|n| n.observed)
            .or_else(|| assignment.get(id))
    }

    /// Concrete parameters of `id` under `assignment`.
    pub fn eval_params(
        &self,
        eval: &mut Evaluator<'_>,
        id: NodeId,
        assignment: &Assignment,
    ) -> Result<Vec<f64>, ModelError> {
        let node = self.node(id);
        node.dist
            .params
            .iter()
            .map(|&p| {
                eval.eval(p, |v| self.value(v, assignment))
                    .map_err(|source| ModelError::Eval {
                        node: node.name.clone(),
                        source,
                    })
            })
            .collect()
    }

    /// Log density of one node given everything else in `assignment`.
    pub fn node_log_density(&self, id: NodeId, assignment: &Assignment) -> Result<f64, ModelError> {
        let mut eval = Evaluator::new(&self.graph);
        self.node_log_density_with(&mut eval, id, assignment)
    }

    fn node_log_density_with(
        &self,
        eval: &mut Evaluator<'_>,
        id: NodeId,
        assignment: &Assignment,
    ) -> Result<f64, ModelError> {
        let node = self.node(id);
        let x = self
            .value(id, assignment)
            .ok_or_else(|| ModelError::MissingValue(node.name.clone()))?;
        let params = self.eval_params(eval, id, assignment)?;
        dists::log_density(node.dist.family, &params, x).map_err(|source| ModelError::Dist {
            node: node.name.clone(),
            source,
        })
    }

    /// Sum of the log densities of every live node.
    pub fn log_joint(&self, assignment: &Assignment) -> Result<f64, ModelError> {
        let mut eval = Evaluator::new(&self.graph);
        let mut total = 0.0;
        for id in self.live_nodes() {
            total += self.node_log_density_with(&mut eval, id, assignment)?;
        }
        Ok(total)
    }

    /// Ancestral sample of every live node.
    pub fn forward_sample<R: Rng + ?Sized>(&self, rng: &mut R, mode: ObservedMode) -> Result<Assignment, ModelError> {
        let order = self.topo_order()?;
        let mut out = Assignment::new();
        let mut eval = Evaluator::new(&self.graph);
        for id in order {
            let node = self.node(id);
            if let (Some(v), ObservedMode::Clamp) = (node.observed, mode) {
                out.set(id, v);
                continue;
            }
            let params: Vec<f64> = node
                .dist
                .params
                .iter()
                .map(|&p| {
                    eval.eval(p, |v| out.get(v)).map_err(|source| ModelError::Eval {
                        node: node.name.clone(),
                        source,
                    })
                })
                .collect::<Result<_, _>>()?;
            let x = dists::sample(node.dist.family, &params, rng).map_err(|source| ModelError::Dist {
                node: node.name.clone(),
                source,
            })?;
            out.set(id, x);
        }
        Ok(out)
    }

    /// Renders a parameter expression as infix text using node names.
    pub fn expr_string(&self, root: ExprRef) -> String {
        let mut memo: HashMap<ExprRef, String> = HashMap::new();
        for r in self.graph.postorder(root, |_| false) {
            let s = match *self.graph.node(r) {
                ExprNode::Input(v) => self.name(v).to_string(),
                ExprNode::Const(c) => format!("{c}"),
                ExprNode::Unary(op, a) => format!("{}({})", op.name(), memo[&a]),
                ExprNode::Binary(op, a, b) => {
                    let sym = match op {
                        crate::compgraph::PrimitiveOp::Add => "+",
                        crate::compgraph::PrimitiveOp::Sub => "-",
                        crate::compgraph::PrimitiveOp::Mul => "*",
                        _ => "/",
                    };
                    format!("({} {sym} {})", memo[&a], memo[&b])
                }
            };
            memo.insert(r, s);
        }
        memo.remove(&root).unwrap_or_default()
    }

    /// One line per live node: `name ~ Family(params) [observed=v] parents={..}`.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        for id in self.live_nodes() {
            let node = self.node(id);
            let params: Vec<String> = node.dist.params.iter().map(|&p| self.expr_string(p)).collect();
            s.push_str(&format!("{} ~ {}({})", node.name, node.dist.family, params.join(", ")));
            if let Some(v) = node.observed {
                s.push_str(&format!(" [observed={v}]"));
            }
            let parents: Vec<&str> = node.parents.iter().map(|&p| self.name(p)).collect();
            s.push_str(&format!(" parents={{{}}}\n", parents.join(", ")));
        }
        s
    }
}

fn name_dist_error(e: ModelError, name: &str) -> ModelError {
    match e {
        ModelError::Dist { source, .. } => ModelError::Dist {
            node: name.to_string(),
            source,
        },
        other => other,
    }
}
