//! Example models and their datasets.
//!
//! Plates are unrolled: every indexed variable becomes one node named with a
//! 1-based suffix (`x1`, `theta3`, ...).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::compgraph::{ExprError, ExprRef};
use crate::dataset::{Dataset, DatasetError};
use crate::dists::Family;
use crate::model::{GraphicalModel, ModelError, NodeId, ObservedMode};

#[derive(Debug, Error)]
pub enum ZooError {
    #[error("{what}: expected {expected} values, got {got}")]
    Length { what: String, expected: usize, got: usize },
    #[error("{0}")]
    Bounds(String),
    #[error("{0}")]
    Index(String),
    #[error("unknown model {0:?}")]
    UnknownModel(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

impl From<ExprError> for ZooError {
    fn from(e: ExprError) -> Self {
        ZooError::Model(e.into())
    }
}

const EIGHT_SCHOOLS_CSV: &str = include_str!("../data/eight_schools.csv");
const BASEBALL_1970_CSV: &str = include_str!("../data/baseball1970.csv");

fn same_len(what: &str, expected: usize, got: usize) -> Result<(), ZooError> {
    if expected == got {
        Ok(())
    } else {
        Err(ZooError::Length {
            what: what.to_string(),
            expected,
            got,
        })
    }
}

/// Small helper over [`GraphicalModel`] for literal-heavy builders.
struct Builder {
    m: GraphicalModel,
}

impl Builder {
    fn new() -> Self {
        Builder {
            m: GraphicalModel::new(),
        }
    }

    fn c(&mut self, x: f64) -> Result<ExprRef, ZooError> {
        Ok(self.m.constant(x)?)
    }

    fn var(&mut self, id: NodeId) -> ExprRef {
        self.m.input(id)
    }

    fn node(&mut self, name: &str, family: Family, params: &[ExprRef]) -> Result<NodeId, ZooError> {
        Ok(self.m.add_node(name, family, params)?)
    }

    /// Adds a node and observes it when a value is given.
    fn data(&mut self, name: &str, family: Family, params: &[ExprRef], value: Option<f64>) -> Result<NodeId, ZooError> {
        let id = self.node(name, family, params)?;
        if let Some(v) = value {
            self.m.observe(id, v)?;
        }
        Ok(id)
    }
}

/// The classic eight-schools fixture as `(sigma, y)`.
pub fn eight_schools_data() -> (Vec<f64>, Vec<f64>) {
    let d = Dataset::from_reader(EIGHT_SCHOOLS_CSV.as_bytes()).expect("bundled fixture parses");
    (d.column("sigma").unwrap().to_vec(), d.column("y").unwrap().to_vec())
}

/// Hits in 45 at-bats for 18 players, 1970 season, as `(K, y)`.
pub fn baseball1970_data() -> (Vec<f64>, Vec<f64>) {
    let d = Dataset::from_reader(BASEBALL_1970_CSV.as_bytes()).expect("bundled fixture parses");
    (d.column("K").unwrap().to_vec(), d.column("y").unwrap().to_vec())
}

/// `mu ~ N(0, 5^2)`, `tau ~ HalfCauchy(5)`, `x_i ~ N(mu, tau^2)`,
/// `y_i ~ N(x_i, sigma_i^2)` with every `y_i` observed. Any number of
/// schools works; the bundled data has eight.
pub fn eight_schools(sigma: &[f64], y: &[f64]) -> Result<GraphicalModel, ZooError> {
    same_len("eight_schools y", sigma.len(), y.len())?;
    if let Some(s) = sigma.iter().find(|s| !(**s > 0.0) || !s.is_finite()) {
        return Err(ZooError::Bounds(format!(
            "eight_schools: sigma must be positive, got {s}"
        )));
    }
    let mut b = Builder::new();
    let zero = b.c(0.0)?;
    let prior_var = b.c(25.0)?;
    let five = b.c(5.0)?;
    let mu = b.node("mu", Family::Normal, &[zero, prior_var])?;
    let tau = b.node("tau", Family::HalfCauchy, &[five])?;
    let (mu, tau) = (b.var(mu), b.var(tau));
    let tau2 = b.m.graph_mut().square(tau)?;
    for i in 0..sigma.len() {
        let x = b.node(&format!("x{}", i + 1), Family::Normal, &[mu, tau2])?;
        let x = b.var(x);
        let s2 = b.c(sigma[i] * sigma[i])?;
        b.data(&format!("y{}", i + 1), Family::Normal, &[x, s2], Some(y[i]))?;
    }
    Ok(b.m)
}

fn binary_trials(k: &[f64], y: Option<&[f64]>) -> Result<GraphicalModel, ZooError> {
    if let Some(y) = y {
        same_len("repeated_binary_trials y", k.len(), y.len())?;
    }
    for (i, &ki) in k.iter().enumerate() {
        let yi = y.map(|y| y[i]).unwrap_or(0.0);
        if ki.fract() != 0.0 || ki < 0.0 || yi.fract() != 0.0 || yi < 0.0 || yi > ki {
            return Err(ZooError::Bounds(format!(
                "repeated_binary_trials row {}: need integers 0 <= y <= K, got K = {ki}, y = {yi}",
                i + 1
            )));
        }
    }
    let mut b = Builder::new();
    let (zero, one) = (b.c(0.0)?, b.c(1.0)?);
    let shape = b.c(1.5)?;
    let m = b.node("m", Family::Uniform, &[zero, one])?;
    let kappa = b.node("kappa", Family::Pareto, &[one, shape])?;
    let (m, kappa) = (b.var(m), b.var(kappa));
    let g = b.m.graph_mut();
    let alpha = g.mul(m, kappa)?;
    let one_minus_m = g.sub(one, m)?;
    let beta = g.mul(one_minus_m, kappa)?;
    for (i, &ki) in k.iter().enumerate() {
        let theta = b.node(&format!("theta{}", i + 1), Family::Beta, &[alpha, beta])?;
        let theta = b.var(theta);
        let kc = b.c(ki)?;
        b.data(&format!("y{}", i + 1), Family::Binomial, &[kc, theta], y.map(|y| y[i]))?;
    }
    Ok(b.m)
}

/// `m ~ Uniform(0, 1)`, `kappa ~ Pareto(1, 1.5)`,
/// `theta_i ~ Beta(m kappa, (1 - m) kappa)`, `y_i ~ Binomial(K_i, theta_i)`.
pub fn repeated_binary_trials(k: &[f64], y: &[f64]) -> Result<GraphicalModel, ZooError> {
    binary_trials(k, Some(y))
}

/// Observes every node named `prefix{i}` with a draw from the prior
/// predictive, using a fixed seed.
fn observe_from_prior(mut m: GraphicalModel, prefix: &str, n: usize, seed: u64) -> Result<GraphicalModel, ZooError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draw = m.forward_sample(&mut rng, ObservedMode::Resample)?;
    for i in 1..=n {
        let id = m.id(&format!("{prefix}{i}"))?;
        let v = draw.get(id).expect("forward sample covers every node");
        m.observe(id, v)?;
    }
    Ok(m)
}

/// Synthetic repeated-binary-trials data with `n` units and trial counts
/// drawn uniformly from `k_range`, generated from the model's prior.
pub fn repeated_binary_trials_synthetic(
    n: usize,
    k_range: std::ops::RangeInclusive<u32>,
    seed: u64,
) -> Result<GraphicalModel, ZooError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k: Vec<f64> = (0..n).map(|_| rng.random_range(k_range.clone()) as f64).collect();
    observe_from_prior(binary_trials(&k, None)?, "y", n, seed.wrapping_add(1))
}

/// Stand-in for the rat tumor data: 71 groups of 14 to 52 trials.
pub fn rat_tumors_synthetic() -> GraphicalModel {
    repeated_binary_trials_synthetic(71, 14..=52, 71).expect("valid synthetic data")
}

/// Stand-in for the 1996 American League batting data: 308 players with
/// 1 to 600 at-bats.
pub fn baseball1996_synthetic() -> GraphicalModel {
    repeated_binary_trials_synthetic(308, 1..=600, 308).expect("valid synthetic data")
}

/// Electric-company records. `grade` and `pair` are 1-based; `treatment` is
/// 0 or 1.
#[derive(Clone, Debug, PartialEq)]
pub struct ElectricData {
    pub grade: Vec<usize>,
    pub pair: Vec<usize>,
    pub treatment: Vec<f64>,
    pub y: Vec<f64>,
}

fn electric(d: &ElectricData, observed: bool) -> Result<GraphicalModel, ZooError> {
    let c = d.y.len();
    same_len("electric_company grade", c, d.grade.len())?;
    same_len("electric_company pair", c, d.pair.len())?;
    same_len("electric_company treatment", c, d.treatment.len())?;
    if d.grade.contains(&0) || d.pair.contains(&0) {
        return Err(ZooError::Index("electric_company: grade and pair are 1-based".into()));
    }
    let groups = d.grade.iter().copied().max().unwrap_or(0);
    let pairs = d.pair.iter().copied().max().unwrap_or(0);
    let mut gp = vec![None; pairs];
    for k in 0..c {
        let slot = &mut gp[d.pair[k] - 1];
        match *slot {
            None => *slot = Some(d.grade[k]),
            Some(g) if g != d.grade[k] => {
                return Err(ZooError::Index(format!(
                    "electric_company: pair {} has classes in grades {g} and {}",
                    d.pair[k], d.grade[k]
                )))
            }
            _ => {}
        }
    }
    let gp: Vec<usize> = gp
        .into_iter()
        .enumerate()
        .map(|(j, g)| g.ok_or_else(|| ZooError::Index(format!("electric_company: pair {} has no classes", j + 1))))
        .collect::<Result<_, _>>()?;

    let mut b = Builder::new();
    let (zero, one) = (b.c(0.0)?, b.c(1.0)?);
    let hundred = b.c(100.0)?;
    let wide = b.c(100.0 * 100.0)?;
    let mut mu = Vec::new();
    for i in 1..=groups {
        let id = b.node(&format!("mu{i}"), Family::Normal, &[zero, one])?;
        mu.push(b.var(id));
    }
    let mut a = Vec::new();
    for (j, &g) in gp.iter().enumerate() {
        let mean = b.m.graph_mut().mul(hundred, mu[g - 1])?;
        let id = b.node(&format!("a{}", j + 1), Family::Normal, &[mean, one])?;
        a.push(b.var(id));
    }
    let mut slope = Vec::new();
    let mut var = Vec::new();
    for i in 1..=groups {
        let id = b.node(&format!("b{i}"), Family::Normal, &[zero, wide])?;
        slope.push(b.var(id));
    }
    for i in 1..=groups {
        let id = b.node(&format!("log_sigma{i}"), Family::Normal, &[zero, one])?;
        let ls = b.var(id);
        let g = b.m.graph_mut();
        let s = g.exp(ls)?;
        var.push(g.square(s)?);
    }
    for k in 0..c {
        let t = b.c(d.treatment[k])?;
        let g = b.m.graph_mut();
        let effect = g.mul(t, slope[d.grade[k] - 1])?;
        let mean = g.add(a[d.pair[k] - 1], effect)?;
        let value = observed.then_some(d.y[k]);
        b.data(
            &format!("y{}", k + 1),
            Family::Normal,
            &[mean, var[d.grade[k] - 1]],
            value,
        )?;
    }
    Ok(b.m)
}

/// `mu_i ~ N(0, 1)`, `a_j ~ N(100 mu_gp[j], 1)`, `b_i ~ N(0, 100^2)`,
/// `log_sigma_i ~ N(0, 1)`, `y_k ~ N(a_p[k] + t_k b_g[k], exp(log_sigma_g[k])^2)`.
pub fn electric_company(d: &ElectricData) -> Result<GraphicalModel, ZooError> {
    electric(d, true)
}

/// Desk-scale layout: `groups` grades, `pairs_per_group` treatment/control
/// pairs per grade, two classes per pair, scores drawn from the prior.
pub fn electric_company_synthetic(
    groups: usize,
    pairs_per_group: usize,
    seed: u64,
) -> Result<GraphicalModel, ZooError> {
    let mut d = ElectricData {
        grade: Vec::new(),
        pair: Vec::new(),
        treatment: Vec::new(),
        y: Vec::new(),
    };
    for g in 0..groups {
        for p in 0..pairs_per_group {
            for t in [0.0, 1.0] {
                d.grade.push(g + 1);
                d.pair.push(g * pairs_per_group + p + 1);
                d.treatment.push(t);
                d.y.push(0.0);
            }
        }
    }
    let n = d.y.len();
    observe_from_prior(electric(&d, false)?, "y", n, seed)
}

/// Four grades, 24 pairs, 48 classes.
pub fn electric_company_desk() -> GraphicalModel {
    electric_company_synthetic(4, 6, 192).expect("valid synthetic data")
}

/// Two-class version with one shared intercept `a` and per-class slopes:
/// `log_sigma ~ N(0, 1)`, `mu_a ~ N(0, 1)`, `a ~ N(100 mu_a, 1)`,
/// `b_i ~ N(0, 100^2)`, `y_i ~ N(a + b_i t_i, exp(log_sigma)^2)`.
pub fn electric_company_micro(t: [f64; 2], y: [f64; 2]) -> Result<GraphicalModel, ZooError> {
    let mut b = Builder::new();
    let (zero, one) = (b.c(0.0)?, b.c(1.0)?);
    let hundred = b.c(100.0)?;
    let wide = b.c(100.0 * 100.0)?;
    let ls = b.node("log_sigma", Family::Normal, &[zero, one])?;
    let mu_a = b.node("mu_a", Family::Normal, &[zero, one])?;
    let mu_a = b.var(mu_a);
    let mean_a = b.m.graph_mut().mul(hundred, mu_a)?;
    let a = b.node("a", Family::Normal, &[mean_a, one])?;
    let b1 = b.node("b1", Family::Normal, &[zero, wide])?;
    let b2 = b.node("b2", Family::Normal, &[zero, wide])?;
    let (ls, a) = (b.var(ls), b.var(a));
    let slopes = [b.var(b1), b.var(b2)];
    let g = b.m.graph_mut();
    let s = g.exp(ls)?;
    let var = g.square(s)?;
    for i in 0..2 {
        let ti = b.c(t[i])?;
        let g = b.m.graph_mut();
        let effect = g.mul(slopes[i], ti)?;
        let mean = g.add(a, effect)?;
        b.data(&format!("y{}", i + 1), Family::Normal, &[mean, var], Some(y[i]))?;
    }
    Ok(b.m)
}

/// Pulmonary-fibrosis records; `patient` ids are dense from 1.
#[derive(Clone, Debug, PartialEq)]
pub struct PulmonaryData {
    pub patient: Vec<usize>,
    pub t: Vec<f64>,
    pub y: Vec<f64>,
}

fn pulmonary(d: &PulmonaryData, observed: bool) -> Result<GraphicalModel, ZooError> {
    let n = d.y.len();
    same_len("pulmonary_fibrosis patient", n, d.patient.len())?;
    same_len("pulmonary_fibrosis t", n, d.t.len())?;
    let patients = d.patient.iter().copied().max().unwrap_or(0);
    let mut seen = vec![false; patients];
    for &p in &d.patient {
        if p == 0 {
            return Err(ZooError::Index("pulmonary_fibrosis: patient ids start at 1".into()));
        }
        seen[p - 1] = true;
    }
    if let Some(j) = seen.iter().position(|s| !s) {
        return Err(ZooError::Index(format!(
            "pulmonary_fibrosis: patient ids must be dense, {} has no records",
            j + 1
        )));
    }
    let mut b = Builder::new();
    let zero = b.c(0.0)?;
    let (v_alpha, hundred) = (b.c(500.0 * 500.0)?, b.c(100.0)?);
    let (v_beta, three) = (b.c(9.0)?, b.c(3.0)?);
    let mu_alpha = b.node("mu_alpha", Family::Normal, &[zero, v_alpha])?;
    let sigma_alpha = b.node("sigma_alpha", Family::HalfCauchy, &[hundred])?;
    let mu_beta = b.node("mu_beta", Family::Normal, &[zero, v_beta])?;
    let sigma_beta = b.node("sigma_beta", Family::HalfCauchy, &[three])?;
    let (mu_alpha, sigma_alpha) = (b.var(mu_alpha), b.var(sigma_alpha));
    let (mu_beta, sigma_beta) = (b.var(mu_beta), b.var(sigma_beta));
    let g = b.m.graph_mut();
    let var_alpha = g.square(sigma_alpha)?;
    let var_beta = g.square(sigma_beta)?;
    let mut alpha = Vec::new();
    let mut beta = Vec::new();
    for j in 1..=patients {
        let id = b.node(&format!("alpha{j}"), Family::Normal, &[mu_alpha, var_alpha])?;
        alpha.push(b.var(id));
    }
    for j in 1..=patients {
        let id = b.node(&format!("beta{j}"), Family::Normal, &[mu_beta, var_beta])?;
        beta.push(b.var(id));
    }
    let sigma = b.node("sigma", Family::HalfCauchy, &[hundred])?;
    let sigma = b.var(sigma);
    let var = b.m.graph_mut().square(sigma)?;
    for i in 0..n {
        let t = b.c(d.t[i])?;
        let p = d.patient[i] - 1;
        let g = b.m.graph_mut();
        let slope = g.mul(t, beta[p])?;
        let mean = g.add(alpha[p], slope)?;
        b.data(
            &format!("y{}", i + 1),
            Family::Normal,
            &[mean, var],
            observed.then_some(d.y[i]),
        )?;
    }
    Ok(b.m)
}

/// `mu_alpha ~ N(0, 500^2)`, `sigma_alpha ~ HalfCauchy(100)`,
/// `mu_beta ~ N(0, 3^2)`, `sigma_beta ~ HalfCauchy(3)`,
/// `alpha_j ~ N(mu_alpha, sigma_alpha^2)`, `beta_j ~ N(mu_beta, sigma_beta^2)`,
/// `sigma ~ HalfCauchy(100)`, `y_i ~ N(alpha_id[i] + t_i beta_id[i], sigma^2)`.
pub fn pulmonary_fibrosis(d: &PulmonaryData) -> Result<GraphicalModel, ZooError> {
    pulmonary(d, true)
}

/// `patients` patients with visits at times `0, 1, ..., visits - 1`.
pub fn pulmonary_fibrosis_synthetic(patients: usize, visits: usize, seed: u64) -> Result<GraphicalModel, ZooError> {
    let mut d = PulmonaryData {
        patient: Vec::new(),
        t: Vec::new(),
        y: Vec::new(),
    };
    for j in 1..=patients {
        for v in 0..visits {
            d.patient.push(j);
            d.t.push(v as f64);
            d.y.push(0.0);
        }
    }
    let n = d.y.len();
    observe_from_prior(pulmonary(&d, false)?, "y", n, seed)
}

/// 20 patients, 3 visits each.
pub fn pulmonary_fibrosis_desk() -> GraphicalModel {
    pulmonary_fibrosis_synthetic(20, 3, 549).expect("valid synthetic data")
}

/// `log_scale ~ N(0, 3^2)`, `x_i ~ N(0, exp(log_scale))`, nothing observed.
pub fn funnel(n: usize) -> Result<GraphicalModel, ZooError> {
    let mut b = Builder::new();
    let zero = b.c(0.0)?;
    let nine = b.c(9.0)?;
    let ls = b.node("log_scale", Family::Normal, &[zero, nine])?;
    let ls = b.var(ls);
    let var = b.m.graph_mut().exp(ls)?;
    for i in 1..=n {
        b.node(&format!("x{i}"), Family::Normal, &[zero, var])?;
    }
    Ok(b.m)
}

/// Observations for [`no_conjugacy`] when no dataset is given.
pub const NO_CONJUGACY_Y: [f64; 6] = [1.2, -0.4, 0.9, 2.1, 0.3, 1.7];

/// `mu ~ Cauchy(0, 5)`, `log_sigma ~ N(0, 1)`,
/// `y_i ~ N(mu, exp(log_sigma)^2)`. No pair of nodes is conjugate.
pub fn no_conjugacy(y: &[f64]) -> Result<GraphicalModel, ZooError> {
    let mut b = Builder::new();
    let (zero, one, five) = (b.c(0.0)?, b.c(1.0)?, b.c(5.0)?);
    let mu = b.node("mu", Family::Cauchy, &[zero, five])?;
    let ls = b.node("log_sigma", Family::Normal, &[zero, one])?;
    let (mu, ls) = (b.var(mu), b.var(ls));
    let g = b.m.graph_mut();
    let s = g.exp(ls)?;
    let var = g.square(s)?;
    for (i, &yi) in y.iter().enumerate() {
        b.data(&format!("y{}", i + 1), Family::Normal, &[mu, var], Some(yi))?;
    }
    Ok(b.m)
}

/// Columns each model reads from a dataset.
pub fn schema(model: &str) -> Result<&'static [&'static str], ZooError> {
    Ok(match model {
        "eight_schools" => &["y", "sigma"],
        "repeated_binary_trials" => &["K", "y"],
        "electric_company" => &["grade", "pair", "treatment", "y"],
        "pulmonary_fibrosis" => &["patient", "t", "y"],
        "no_conjugacy" => &["y"],
        "funnel" => &[],
        other => return Err(ZooError::UnknownModel(other.to_string())),
    })
}

/// Exemption globs applied when the caller gives none. These keep the
/// top-level location variables in the sampled set (`mu` would otherwise be
/// marginalized too, since every marginal `y_i` is Normal and affine in it).
pub fn default_exempt(model: &str) -> &'static [&'static str] {
    match model {
        "eight_schools" => &["mu"],
        "electric_company" => &["mu*"],
        "pulmonary_fibrosis" => &["mu_alpha", "mu_beta"],
        _ => &[],
    }
}

/// Model names accepted by [`build`].
pub const MODEL_NAMES: [&str; 6] = [
    "eight_schools",
    "repeated_binary_trials",
    "electric_company",
    "pulmonary_fibrosis",
    "funnel",
    "no_conjugacy",
];

fn indices(d: &Dataset, column: &str) -> Result<Vec<usize>, ZooError> {
    d.integer_column(column)?
        .into_iter()
        .map(|i| usize::try_from(i).map_err(|_| ZooError::Index(format!("column {column:?}: negative index {i}"))))
        .collect()
}

/// Builds a model by name, from `data` or from its default dataset.
pub fn build(model: &str, data: Option<&Dataset>) -> Result<GraphicalModel, ZooError> {
    schema(model)?;
    let Some(d) = data else {
        return Ok(match model {
            "eight_schools" => {
                let (sigma, y) = eight_schools_data();
                eight_schools(&sigma, &y)?
            }
            "repeated_binary_trials" => {
                let (k, y) = baseball1970_data();
                repeated_binary_trials(&k, &y)?
            }
            "electric_company" => electric_company_desk(),
            "pulmonary_fibrosis" => pulmonary_fibrosis_desk(),
            "funnel" => funnel(9)?,
            _ => no_conjugacy(&NO_CONJUGACY_Y)?,
        });
    };
    match model {
        "eight_schools" => eight_schools(d.column("sigma")?, d.column("y")?),
        "repeated_binary_trials" => repeated_binary_trials(d.column("K")?, d.column("y")?),
        "electric_company" => electric_company(&ElectricData {
            grade: indices(d, "grade")?,
            pair: indices(d, "pair")?,
            treatment: d.column("treatment")?.to_vec(),
            y: d.column("y")?.to_vec(),
        }),
        "pulmonary_fibrosis" => pulmonary_fibrosis(&PulmonaryData {
            patient: indices(d, "patient")?,
            t: d.column("t")?.to_vec(),
            y: d.column("y")?.to_vec(),
        }),
        "funnel" => funnel(d.rows()),
        _ => no_conjugacy(d.column("y")?),
    }
}

/// A zoo model with its default exemption globs.
pub struct ZooEntry {
    pub name: &'static str,
    pub model: GraphicalModel,
    pub exempt: Vec<String>,
}

/// Every bundled model on its default data, for parameterized tests.
pub fn registry() -> Vec<ZooEntry> {
    let entry = |name, model, exempt: &[&str]| ZooEntry {
        name,
        model,
        exempt: exempt.iter().map(|s| s.to_string()).collect(),
    };
    let (sigma, y) = eight_schools_data();
    let (k, hits) = baseball1970_data();
    vec![
        entry("eight_schools", eight_schools(&sigma, &y).unwrap(), &["mu"]),
        entry("baseball1970", repeated_binary_trials(&k, &hits).unwrap(), &[]),
        entry("rat_tumors", rat_tumors_synthetic(), &[]),
        entry("baseball1996", baseball1996_synthetic(), &[]),
        entry("electric_company", electric_company_desk(), &["mu*"]),
        entry(
            "electric_company_micro",
            electric_company_micro([1.0, 2.0], [93.0, 104.0]).unwrap(),
            &[],
        ),
        entry(
            "pulmonary_fibrosis",
            pulmonary_fibrosis_desk(),
            &["mu_alpha", "mu_beta"],
        ),
        entry("funnel", funnel(9).unwrap(), &[]),
        entry("no_conjugacy", no_conjugacy(&NO_CONJUGACY_Y).unwrap(), &[]),
    ]
}
