//! End-to-end runs: build a model, transform it according to the mode, run
//! NUTS, recover marginalized variables and report ESS.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::compgraph::Evaluator;
use crate::dataset::{Dataset, DatasetError};
use crate::diagnostics::summarize;
use crate::grad::{GradError, LogDensityFn};
use crate::model::{Assignment, GraphicalModel, NodeId};
use crate::sampler::{run_nuts, NutsConfig, SamplerError};
use crate::transform::{compile_globs, marginalize, reparam_all, ReversalEvent, TransformError};
use crate::zoo::{self, ZooError};

pub const REPORT_SCHEMA: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    /// NUTS on the model as written.
    #[serde(rename = "hmc")]
    Hmc,
    /// NUTS on the marginalized model, then recovery.
    #[serde(rename = "hmc-m")]
    HmcM,
    /// NUTS on the non-centered model.
    #[serde(rename = "hmc-r")]
    HmcR,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Hmc => "hmc",
            Mode::HmcM => "hmc-m",
            Mode::HmcR => "hmc-r",
        })
    }
}

impl FromStr for Mode {
    type Err = ExperimentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "hmc" => Ok(Mode::Hmc),
            "hmc-m" => Ok(Mode::HmcM),
            "hmc-r" => Ok(Mode::HmcR),
            other => Err(ExperimentError::Config(format!(
                "unknown mode {other:?} (expected hmc, hmc-m or hmc-r)"
            ))),
        }
    }
}

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Zoo(#[from] ZooError),
    #[error(transparent)]
    Transform(#[from] TransformError),
    #[error(transparent)]
    Grad(#[from] GradError),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: std::io::Error },
}

/// Everything needed for one run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub model: String,
    pub data: Option<PathBuf>,
    pub mode: Mode,
    /// Node-name globs never marginalized. `None` selects the model's
    /// default set.
    pub exempt: Option<Vec<String>>,
    pub sampler: NutsConfig,
    pub out: Option<PathBuf>,
    pub draws_csv: Option<PathBuf>,
}

impl RunConfig {
    pub fn new(model: &str, mode: Mode) -> Self {
        RunConfig {
            model: model.to_string(),
            data: None,
            mode,
            exempt: None,
            sampler: NutsConfig::default(),
            out: None,
            draws_csv: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VariableEss {
    pub name: String,
    pub ess: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub schema: u32,
    pub model: String,
    pub mode: Mode,
    pub seed: u64,
    pub original_dim: usize,
    pub reduced_dim: usize,
    pub exempt: Vec<String>,
    pub transformation_log: Vec<ReversalEvent>,
    /// Nodes rewritten in non-centered form (hmc-r only).
    pub reparameterized: Vec<String>,
    /// ESS of every latent of the original model.
    pub ess: Vec<VariableEss>,
    pub min_ess: f64,
    pub wall_time_s: f64,
    pub transform_time_s: f64,
    pub min_ess_per_s: f64,
    pub divergences: usize,
    pub constant_variables: Vec<String>,
    pub warnings: Vec<String>,
    pub sampler: NutsConfig,
}

impl ExperimentReport {
    pub fn ess_of(&self, name: &str) -> Option<f64> {
        self.ess.iter().find(|v| v.name == name).map(|v| v.ess)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Draws of the original model's latents, row-major per chain.
#[derive(Clone, Debug, PartialEq)]
pub struct Draws {
    pub names: Vec<String>,
    pub chains: Vec<Vec<f64>>,
}

impl Draws {
    pub fn dim(&self) -> usize {
        self.names.len()
    }

    pub fn index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Per-chain draws of variable `j`.
    pub fn column(&self, j: usize) -> Vec<Vec<f64>> {
        let d = self.dim();
        self.chains
            .iter()
            .map(|c| c.iter().skip(j).step_by(d).copied().collect())
            .collect()
    }

    /// All chains of `name` concatenated.
    pub fn pooled(&self, name: &str) -> Option<Vec<f64>> {
        self.index(name).map(|j| self.column(j).concat())
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), ExperimentError> {
        let err = |e: csv::Error| ExperimentError::Write {
            path: path.to_path_buf(),
            source: e.into(),
        };
        let mut w = csv::Writer::from_path(path).map_err(err)?;
        let mut header = vec!["chain".to_string(), "draw".to_string()];
        header.extend(self.names.iter().cloned());
        w.write_record(&header).map_err(err)?;
        let d = self.dim().max(1);
        for (c, chain) in self.chains.iter().enumerate() {
            for (i, row) in chain.chunks(d).enumerate() {
                let mut rec = vec![c.to_string(), i.to_string()];
                rec.extend(row.iter().map(|x| x.to_string()));
                w.write_record(&rec).map_err(err)?;
            }
        }
        w.flush().map_err(|e| ExperimentError::Write {
            path: path.to_path_buf(),
            source: e,
        })
    }
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub report: ExperimentReport,
    pub draws: Draws,
}

fn recovery_rng(seed: u64, chain: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::MAX - chain as u64);
    rng
}

/// Loads the dataset (if any), builds the model and runs it. Writes the
/// report and draws when the config names output paths.
pub fn run(config: &RunConfig) -> Result<RunOutput, ExperimentError> {
    let required = zoo::schema(&config.model)?;
    let mut warnings = Vec::new();
    let data = match &config.data {
        Some(path) => {
            let d = Dataset::load(path)?;
            for extra in d.check_schema(required)? {
                let msg = format!("ignoring extra column {extra:?} in {}", path.display());
                log::warn!("{msg}");
                warnings.push(msg);
            }
            Some(d)
        }
        None => None,
    };
    let model = zoo::build(&config.model, data.as_ref())?;
    let exempt: Vec<String> = match &config.exempt {
        Some(e) => e.clone(),
        None => zoo::default_exempt(&config.model)
            .iter()
            .map(|s| s.to_string())
            .collect(),
    };
    let mut out = run_model(&config.model, &model, config.mode, &exempt, &config.sampler)?;
    warnings.append(&mut out.report.warnings);
    out.report.warnings = warnings;
    if let Some(path) = &config.out {
        std::fs::write(path, out.report.to_json() + "\n").map_err(|source| ExperimentError::Write {
            path: path.clone(),
            source,
        })?;
    }
    if let Some(path) = &config.draws_csv {
        out.draws.write_csv(path)?;
    }
    Ok(out)
}

/// Runs `mode` on an already built model.
pub fn run_model(
    name: &str,
    model: &GraphicalModel,
    mode: Mode,
    exempt: &[String],
    nuts: &NutsConfig,
) -> Result<RunOutput, ExperimentError> {
    nuts.validate()?;
    if nuts.draws < 4 {
        return Err(ExperimentError::Config("need at least 4 draws per chain".into()));
    }
    let globs = compile_globs(exempt).map_err(|e| ExperimentError::Config(format!("bad exemption pattern: {e}")))?;
    let original: Vec<NodeId> = model.latents();
    let names: Vec<String> = original.iter().map(|&id| model.name(id).to_string()).collect();

    let t0 = Instant::now();
    let mut log = Vec::new();
    let mut reparameterized = Vec::new();
    let mut marg = None;
    let mut rep = None;
    let target = match mode {
        Mode::Hmc => model.clone(),
        Mode::HmcM => {
            let m = marginalize(model, &globs)?;
            log = m.log.clone();
            let reduced = m.model.clone();
            marg = Some(m);
            reduced
        }
        Mode::HmcR => {
            let r = reparam_all(model)?;
            if r.derived.is_empty() {
                return Err(ExperimentError::Config(format!(
                    "mode hmc-r needs a latent Normal node with parents; {name} has none"
                )));
            }
            reparameterized = r.derived.iter().map(|(_, n, _)| n.clone()).collect();
            let reduced = r.model.clone();
            rep = Some(r);
            reduced
        }
    };
    let f = LogDensityFn::new(&target)?;
    let transform_time_s = t0.elapsed().as_secs_f64();

    let t1 = Instant::now();
    let reduced_ids: Vec<NodeId> = f.latents().iter().map(|l| l.id).collect();
    let mut divergences = 0;
    // Reduced draws per chain as assignments over the target's latents.
    let reduced_draws: Vec<Vec<Assignment>> = if f.dim() == 0 {
        vec![vec![Assignment::new(); nuts.draws]; nuts.chains]
    } else {
        let trace = run_nuts(&f, nuts)?;
        divergences = trace.chains.iter().map(|c| c.divergences()).sum();
        trace
            .chains
            .iter()
            .map(|c| {
                (0..c.len())
                    .map(|i| reduced_ids.iter().copied().zip(c.row(i).iter().copied()).collect())
                    .collect()
            })
            .collect()
    };

    let mut chains = Vec::with_capacity(reduced_draws.len());
    for (c, draws) in reduced_draws.iter().enumerate() {
        let mut rows = Vec::with_capacity(draws.len() * original.len());
        match (&marg, &rep) {
            (Some(m), _) => {
                let mut rng = recovery_rng(nuts.seed, c);
                let mut eval = Evaluator::new(m.stack.graph());
                for a in draws {
                    let full = m.stack.recover_with(&mut eval, a, &mut rng)?;
                    rows.extend(original.iter().map(|&id| full.get(id).expect("recovered")));
                }
            }
            (_, Some(r)) => {
                let mut eval = Evaluator::new(r.model.graph());
                for a in draws {
                    let full = r
                        .original_values(&mut eval, a)
                        .map_err(|e| ExperimentError::Config(format!("cannot map non-centered draws back: {e}")))?;
                    rows.extend(original.iter().map(|&id| full.get(id).expect("derived")));
                }
            }
            _ => {
                for a in draws {
                    rows.extend(original.iter().map(|&id| a.get(id).expect("sampled")));
                }
            }
        }
        chains.push(rows);
    }
    let wall_time_s = t1.elapsed().as_secs_f64();

    let draws = Draws { names, chains };
    let vars: Vec<(String, Vec<Vec<f64>>)> = (0..draws.dim())
        .map(|j| (draws.names[j].clone(), draws.column(j)))
        .collect();
    let summary = summarize(&vars, wall_time_s);
    let mut warnings = Vec::new();
    if divergences > 0 {
        warnings.push(format!("{divergences} divergent transitions"));
    }
    for name in &summary.constant {
        warnings.push(format!("draws of {name} are constant"));
    }
    let report = ExperimentReport {
        schema: REPORT_SCHEMA,
        model: name.to_string(),
        mode,
        seed: nuts.seed,
        original_dim: original.len(),
        reduced_dim: f.dim(),
        exempt: exempt.to_vec(),
        transformation_log: log,
        reparameterized,
        ess: summary
            .per_variable
            .iter()
            .map(|(name, ess)| VariableEss {
                name: name.clone(),
                ess: *ess,
            })
            .collect(),
        min_ess: summary.min_ess,
        wall_time_s,
        transform_time_s,
        min_ess_per_s: summary.min_ess_per_s,
        divergences,
        constant_variables: summary.constant,
        warnings,
        sampler: nuts.clone(),
    };
    Ok(RunOutput { report, draws })
}
