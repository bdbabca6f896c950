//! No-U-turn sampler with multinomial trajectory sampling, dual-averaging
//! step-size adaptation and a windowed diagonal metric.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grad::{LogDensityFn, Scratch};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NutsConfig {
    pub warmup: usize,
    pub draws: usize,
    pub max_tree_depth: usize,
    pub target_accept: f64,
    pub seed: u64,
    pub chains: usize,
}

impl Default for NutsConfig {
    fn default() -> Self {
        NutsConfig {
            warmup: 2000,
            draws: 10_000,
            max_tree_depth: 10,
            target_accept: 0.8,
            seed: 0,
            chains: 1,
        }
    }
}

impl NutsConfig {
    pub fn validate(&self) -> Result<(), SamplerError> {
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return Err(SamplerError::Config(format!(
                "target_accept must lie in (0, 1), got {}",
                self.target_accept
            )));
        }
        if self.max_tree_depth == 0 {
            return Err(SamplerError::Config("max_tree_depth must be at least 1".into()));
        }
        if self.chains == 0 {
            return Err(SamplerError::Config("chains must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SamplerError {
    #[error("invalid sampler configuration: {0}")]
    Config(String),
    #[error("the model has no latent variables to sample")]
    ZeroDimension,
    #[error("no finite log density found after {0} initialization attempts")]
    Initialization(usize),
    #[error("step size search failed: {0}")]
    StepSize(String),
}

/// Draws of one chain, row-major `[draw][latent]`, in constrained space.
#[derive(Clone, Debug, PartialEq)]
pub struct Chain {
    pub draws: Vec<f64>,
    pub dim: usize,
    pub accept_stat: Vec<f64>,
    pub tree_depth: Vec<u32>,
    pub divergent: Vec<bool>,
    pub step_size: f64,
    pub inv_metric: Vec<f64>,
}

impl Chain {
    pub fn len(&self) -> usize {
        self.accept_stat.len()
    }

    pub fn is_empty(&self) -> bool {
        self.accept_stat.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.draws[i * self.dim..(i + 1) * self.dim]
    }

    /// All draws of latent `j`.
    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.len()).map(|i| self.draws[i * self.dim + j]).collect()
    }

    pub fn divergences(&self) -> usize {
        self.divergent.iter().filter(|&&d| d).count()
    }
}

/// Output of [`run_nuts`].
#[derive(Clone, Debug, PartialEq)]
pub struct Trace {
    pub names: Vec<String>,
    pub chains: Vec<Chain>,
}

impl Trace {
    /// Per-chain draws of latent `j`.
    pub fn column(&self, j: usize) -> Vec<Vec<f64>> {
        self.chains.iter().map(|c| c.column(j)).collect()
    }
}

/// Uniform(-2, 2) per coordinate, redrawn until the log density is finite.
pub fn init_point<R: Rng + ?Sized>(f: &LogDensityFn, rng: &mut R) -> Result<Vec<f64>, SamplerError> {
    const TRIES: usize = 100;
    let mut s = Scratch::default();
    let mut grad = vec![0.0; f.dim()];
    for _ in 0..TRIES {
        let q: Vec<f64> = (0..f.dim()).map(|_| rng.random_range(-2.0..2.0)).collect();
        let lp = f.logp_grad(&q, &mut grad, &mut s);
        if lp.is_finite() && grad.iter().all(|g| g.is_finite()) {
            return Ok(q);
        }
    }
    Err(SamplerError::Initialization(TRIES))
}

/// Runs every chain (in parallel threads) and collects the draws.
pub fn run_nuts(f: &LogDensityFn, config: &NutsConfig) -> Result<Trace, SamplerError> {
    config.validate()?;
    if f.dim() == 0 {
        return Err(SamplerError::ZeroDimension);
    }
    let chains: Vec<Result<Chain, SamplerError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..config.chains)
            .map(|c| scope.spawn(move || run_chain(f, config, c)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("sampler thread panicked"))
            .collect()
    });
    Ok(Trace {
        names: f.latents().iter().map(|l| l.name.clone()).collect(),
        chains: chains.into_iter().collect::<Result<_, _>>()?,
    })
}

/// The RNG used for chain `chain` of a run seeded with `seed`.
pub fn chain_rng(seed: u64, chain: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chain as u64);
    rng
}

/// Runs one chain with its own RNG stream.
pub fn run_chain(f: &LogDensityFn, config: &NutsConfig, chain: usize) -> Result<Chain, SamplerError> {
    config.validate()?;
    let mut rng = chain_rng(config.seed, chain);
    let q = init_point(f, &mut rng)?;
    let mut nuts = Nuts::new(f, q, config.max_tree_depth);
    let mut adapt = Adaptation::new(config.warmup, config.target_accept, f.dim());
    nuts.init_stepsize(&mut rng)?;
    adapt.restart(nuts.eps);
    for _ in 0..config.warmup {
        let info = nuts.transition(&mut rng);
        nuts.eps = adapt.learn_stepsize(info.accept_stat);
        if adapt.learn_variance(&mut nuts.inv_metric, &nuts.z.q) {
            nuts.init_stepsize(&mut rng)?;
            adapt.restart(nuts.eps);
        }
    }
    if config.warmup > 0 {
        nuts.eps = adapt.final_stepsize();
    }
    let dim = f.dim();
    let mut out = Chain {
        draws: Vec::with_capacity(config.draws * dim),
        dim,
        accept_stat: Vec::with_capacity(config.draws),
        tree_depth: Vec::with_capacity(config.draws),
        divergent: Vec::with_capacity(config.draws),
        step_size: nuts.eps,
        inv_metric: nuts.inv_metric.clone(),
    };
    let mut s = Scratch::default();
    for _ in 0..config.draws {
        let info = nuts.transition(&mut rng);
        out.draws.extend(f.constrain(&nuts.z.q, &mut s));
        out.accept_stat.push(info.accept_stat);
        out.tree_depth.push(info.depth);
        out.divergent.push(info.divergent);
    }
    Ok(out)
}

#[derive(Clone, Debug)]
struct Point {
    q: Vec<f64>,
    p: Vec<f64>,
    grad: Vec<f64>,
    logp: f64,
}

/// Result of one NUTS transition.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TransitionInfo {
    pub accept_stat: f64,
    pub depth: u32,
    pub divergent: bool,
    pub n_leapfrog: usize,
}

const MAX_DELTA_H: f64 = 1000.0;

fn log_sum_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn add_into(acc: &mut [f64], x: &[f64]) {
    acc.iter_mut().zip(x).for_each(|(a, b)| *a += b);
}

/// Generalized no-U-turn test.
fn criterion(p_sharp_minus: &[f64], p_sharp_plus: &[f64], rho: &[f64]) -> bool {
    dot(p_sharp_plus, rho) > 0.0 && dot(p_sharp_minus, rho) > 0.0
}

/// Sampler state for one chain with a diagonal inverse metric.
pub struct Nuts<'f> {
    f: &'f LogDensityFn,
    z: Point,
    pub eps: f64,
    pub inv_metric: Vec<f64>,
    max_depth: usize,
    scratch: Scratch,
    n_leapfrog: usize,
    sum_metro_prob: f64,
    divergent: bool,
}

impl<'f> Nuts<'f> {
    pub fn new(f: &'f LogDensityFn, q: Vec<f64>, max_depth: usize) -> Self {
        let dim = f.dim();
        let mut scratch = Scratch::default();
        let mut grad = vec![0.0; dim];
        let logp = f.logp_grad(&q, &mut grad, &mut scratch);
        Nuts {
            f,
            z: Point {
                q,
                p: vec![0.0; dim],
                grad,
                logp,
            },
            eps: 1.0,
            inv_metric: vec![1.0; dim],
            max_depth,
            scratch,
            n_leapfrog: 0,
            sum_metro_prob: 0.0,
            divergent: false,
        }
    }

    pub fn position(&self) -> &[f64] {
        &self.z.q
    }

    fn kinetic(&self, p: &[f64]) -> f64 {
        0.5 * p.iter().zip(&self.inv_metric).map(|(p, m)| p * p * m).sum::<f64>()
    }

    fn hamiltonian(&self, z: &Point) -> f64 {
        let h = -z.logp + self.kinetic(&z.p);
        if h.is_nan() {
            f64::INFINITY
        } else {
            h
        }
    }

    fn p_sharp(&self, p: &[f64]) -> Vec<f64> {
        p.iter().zip(&self.inv_metric).map(|(p, m)| p * m).collect()
    }

    fn sample_momentum<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        for (p, m) in self.z.p.iter_mut().zip(&self.inv_metric) {
            let n: f64 = StandardNormal.sample(rng);
            *p = n / m.sqrt();
        }
    }

    fn leapfrog(&mut self, z: &mut Point, eps: f64) {
        for (p, g) in z.p.iter_mut().zip(&z.grad) {
            *p += 0.5 * eps * g;
        }
        for ((q, p), m) in z.q.iter_mut().zip(&z.p).zip(&self.inv_metric) {
            *q += eps * m * p;
        }
        z.logp = self.f.logp_grad(&z.q, &mut z.grad, &mut self.scratch);
        for (p, g) in z.p.iter_mut().zip(&z.grad) {
            *p += 0.5 * eps * g;
        }
    }

    /// Heuristic initial step size: double or halve until the acceptance
    /// of a single leapfrog step crosses 0.8.
    pub fn init_stepsize<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<(), SamplerError> {
        let saved = self.z.clone();
        self.sample_momentum(rng);
        let h0 = self.hamiltonian(&self.z);
        let mut z = self.z.clone();
        self.leapfrog(&mut z, self.eps);
        let delta = h0 - self.hamiltonian(&z);
        let direction = if delta > 0.8f64.ln() { 1 } else { -1 };
        loop {
            self.z = saved.clone();
            self.sample_momentum(rng);
            let h0 = self.hamiltonian(&self.z);
            let mut z = self.z.clone();
            self.leapfrog(&mut z, self.eps);
            let delta = h0 - self.hamiltonian(&z);
            if (direction == 1 && !(delta > 0.8f64.ln())) || (direction == -1 && !(delta < 0.8f64.ln())) {
                break;
            }
            self.eps = if direction == 1 { 2.0 * self.eps } else { 0.5 * self.eps };
            if self.eps > 1e7 {
                return Err(SamplerError::StepSize("step size diverged to infinity".into()));
            }
            if self.eps == 0.0 {
                return Err(SamplerError::StepSize("step size collapsed to zero".into()));
            }
        }
        self.z = saved;
        Ok(())
    }

    /// One NUTS transition from the current point.
    pub fn transition<R: Rng + ?Sized>(&mut self, rng: &mut R) -> TransitionInfo {
        self.sample_momentum(rng);
        let dim = self.z.q.len();
        let z0 = self.z.clone();
        let mut z_fwd = z0.clone();
        let mut z_bck = z0.clone();
        let mut z_sample = z0.clone();
        let mut z_propose = z0.clone();

        let p0 = z0.p.clone();
        let ps0 = self.p_sharp(&p0);
        let (mut p_fwd_fwd, mut p_sharp_fwd_fwd) = (p0.clone(), ps0.clone());
        let (mut p_fwd_bck, mut p_sharp_fwd_bck) = (p0.clone(), ps0.clone());
        let (mut p_bck_fwd, mut p_sharp_bck_fwd) = (p0.clone(), ps0.clone());
        let (mut p_bck_bck, mut p_sharp_bck_bck) = (p0.clone(), ps0);
        let mut rho = p0;
        let mut log_sum_weight = 0.0;
        let h0 = self.hamiltonian(&z0);
        self.n_leapfrog = 0;
        self.sum_metro_prob = 0.0;
        self.divergent = false;
        let mut depth = 0;

        while depth < self.max_depth {
            let mut rho_fwd = vec![0.0; dim];
            let mut rho_bck = vec![0.0; dim];
            let mut lsw_subtree = f64::NEG_INFINITY;
            let valid = if rng.random::<f64>() > 0.5 {
                rho_bck.copy_from_slice(&rho);
                p_bck_fwd.clone_from(&p_fwd_bck);
                p_sharp_bck_fwd.clone_from(&p_sharp_fwd_bck);
                self.build_tree(
                    depth,
                    &mut z_fwd,
                    &mut z_propose,
                    &mut p_sharp_fwd_bck,
                    &mut p_sharp_fwd_fwd,
                    &mut rho_fwd,
                    &mut p_fwd_bck,
                    &mut p_fwd_fwd,
                    h0,
                    1.0,
                    &mut lsw_subtree,
                    rng,
                )
            } else {
                rho_fwd.copy_from_slice(&rho);
                p_fwd_bck.clone_from(&p_bck_fwd);
                p_sharp_fwd_bck.clone_from(&p_sharp_bck_fwd);
                self.build_tree(
                    depth,
                    &mut z_bck,
                    &mut z_propose,
                    &mut p_sharp_bck_fwd,
                    &mut p_sharp_bck_bck,
                    &mut rho_bck,
                    &mut p_bck_fwd,
                    &mut p_bck_bck,
                    h0,
                    -1.0,
                    &mut lsw_subtree,
                    rng,
                )
            };
            if !valid {
                break;
            }
            depth += 1;
            if lsw_subtree > log_sum_weight {
                z_sample.clone_from(&z_propose);
            } else {
                let accept = (lsw_subtree - log_sum_weight).exp();
                if rng.random::<f64>() < accept {
                    z_sample.clone_from(&z_propose);
                }
            }
            log_sum_weight = log_sum_exp(log_sum_weight, lsw_subtree);
            for i in 0..dim {
                rho[i] = rho_bck[i] + rho_fwd[i];
            }
            let mut persist = criterion(&p_sharp_bck_bck, &p_sharp_fwd_fwd, &rho);
            let mut rho_ext = rho_bck.clone();
            add_into(&mut rho_ext, &p_fwd_bck);
            persist &= criterion(&p_sharp_bck_bck, &p_sharp_fwd_bck, &rho_ext);
            rho_ext.copy_from_slice(&rho_fwd);
            add_into(&mut rho_ext, &p_bck_fwd);
            persist &= criterion(&p_sharp_bck_fwd, &p_sharp_fwd_fwd, &rho_ext);
            if !persist {
                break;
            }
        }
        self.z = z_sample;
        TransitionInfo {
            accept_stat: if self.n_leapfrog > 0 {
                self.sum_metro_prob / self.n_leapfrog as f64
            } else {
                0.0
            },
            depth: depth as u32,
            divergent: self.divergent,
            n_leapfrog: self.n_leapfrog,
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn build_tree<R: Rng + ?Sized>(
        &mut self,
        depth: usize,
        z: &mut Point,
        z_propose: &mut Point,
        p_sharp_beg: &mut Vec<f64>,
        p_sharp_end: &mut Vec<f64>,
        rho: &mut [f64],
        p_beg: &mut Vec<f64>,
        p_end: &mut Vec<f64>,
        h0: f64,
        sign: f64,
        log_sum_weight: &mut f64,
        rng: &mut R,
    ) -> bool {
        if depth == 0 {
            self.leapfrog(z, sign * self.eps);
            self.n_leapfrog += 1;
            let h = self.hamiltonian(z);
            if h - h0 > MAX_DELTA_H {
                self.divergent = true;
            }
            *log_sum_weight = log_sum_exp(*log_sum_weight, h0 - h);
            self.sum_metro_prob += if h0 - h > 0.0 { 1.0 } else { (h0 - h).exp() };
            z_propose.clone_from(z);
            *p_sharp_beg = self.p_sharp(&z.p);
            p_sharp_end.clone_from(p_sharp_beg);
            add_into(rho, &z.p);
            p_beg.clone_from(&z.p);
            p_end.clone_from(p_beg);
            return !self.divergent;
        }
        let dim = rho.len();
        let mut p_init_end = vec![0.0; dim];
        let mut p_sharp_init_end = vec![0.0; dim];
        let mut rho_init = vec![0.0; dim];
        let mut lsw_init = f64::NEG_INFINITY;
        let valid_init = self.build_tree(
            depth - 1,
            z,
            z_propose,
            p_sharp_beg,
            &mut p_sharp_init_end,
            &mut rho_init,
            p_beg,
            &mut p_init_end,
            h0,
            sign,
            &mut lsw_init,
            rng,
        );
        if !valid_init {
            return false;
        }
        let mut z_propose_final = z.clone();
        let mut p_final_beg = vec![0.0; dim];
        let mut p_sharp_final_beg = vec![0.0; dim];
        let mut rho_final = vec![0.0; dim];
        let mut lsw_final = f64::NEG_INFINITY;
        let valid_final = self.build_tree(
            depth - 1,
            z,
            &mut z_propose_final,
            &mut p_sharp_final_beg,
            p_sharp_end,
            &mut rho_final,
            &mut p_final_beg,
            p_end,
            h0,
            sign,
            &mut lsw_final,
            rng,
        );
        if !valid_final {
            return false;
        }
        let lsw_subtree = log_sum_exp(lsw_init, lsw_final);
        *log_sum_weight = log_sum_exp(*log_sum_weight, lsw_subtree);
        if lsw_final > lsw_subtree {
            z_propose.clone_from(&z_propose_final);
        } else {
            let accept = (lsw_final - lsw_subtree).exp();
            if rng.random::<f64>() < accept {
                z_propose.clone_from(&z_propose_final);
            }
        }
        let mut rho_subtree = rho_init.clone();
        add_into(&mut rho_subtree, &rho_final);
        add_into(rho, &rho_subtree);
        let mut persist = criterion(p_sharp_beg, p_sharp_end, &rho_subtree);
        let mut rho_ext = rho_init;
        add_into(&mut rho_ext, &p_final_beg);
        persist &= criterion(p_sharp_beg, &p_sharp_final_beg, &rho_ext);
        let mut rho_ext = rho_final;
        add_into(&mut rho_ext, &p_init_end);
        persist &= criterion(&p_sharp_init_end, p_sharp_end, &rho_ext);
        persist
    }
}

/// Dual averaging of the step size plus windowed variance estimation.
struct Adaptation {
    // dual averaging
    mu: f64,
    s_bar: f64,
    x_bar: f64,
    counter: f64,
    delta: f64,
    // windows
    num_warmup: usize,
    init_buffer: usize,
    term_buffer: usize,
    window_size: usize,
    next_window: usize,
    window_counter: usize,
    adapt_metric: bool,
    // Welford accumulator
    n: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

const GAMMA: f64 = 0.05;
const T0: f64 = 10.0;
const KAPPA: f64 = 0.75;

impl Adaptation {
    fn new(num_warmup: usize, delta: f64, dim: usize) -> Self {
        let (mut init_buffer, mut term_buffer, mut base_window) = (75, 50, 25);
        let adapt_metric = num_warmup >= 20;
        if adapt_metric && init_buffer + base_window + term_buffer > num_warmup {
            init_buffer = (0.15 * num_warmup as f64) as usize;
            term_buffer = (0.1 * num_warmup as f64) as usize;
            base_window = num_warmup - (init_buffer + term_buffer);
        }
        Adaptation {
            mu: 0.0,
            s_bar: 0.0,
            x_bar: 0.0,
            counter: 0.0,
            delta,
            num_warmup,
            init_buffer,
            term_buffer,
            window_size: base_window,
            next_window: init_buffer + base_window - 1,
            window_counter: 0,
            adapt_metric,
            n: 0,
            mean: vec![0.0; dim],
            m2: vec![0.0; dim],
        }
    }

    fn restart(&mut self, eps: f64) {
        self.mu = (10.0 * eps).ln();
        self.s_bar = 0.0;
        self.x_bar = 0.0;
        self.counter = 0.0;
    }

    fn learn_stepsize(&mut self, accept_stat: f64) -> f64 {
        self.counter += 1.0;
        let stat = accept_stat.min(1.0);
        let eta = 1.0 / (self.counter + T0);
        self.s_bar = (1.0 - eta) * self.s_bar + eta * (self.delta - stat);
        let x = self.mu - self.s_bar * self.counter.sqrt() / GAMMA;
        let x_eta = self.counter.powf(-KAPPA);
        self.x_bar = (1.0 - x_eta) * self.x_bar + x_eta * x;
        x.exp()
    }

    fn final_stepsize(&self) -> f64 {
        self.x_bar.exp()
    }

    fn in_window(&self) -> bool {
        self.window_counter >= self.init_buffer
            && self.window_counter < self.num_warmup - self.term_buffer
            && self.window_counter != self.num_warmup
    }

    fn window_end(&self) -> bool {
        self.window_counter == self.next_window && self.window_counter != self.num_warmup
    }

    fn compute_next_window(&mut self) {
        let last = self.num_warmup - self.term_buffer - 1;
        if self.next_window == last {
            return;
        }
        self.window_size *= 2;
        self.next_window = self.window_counter + self.window_size;
        if self.next_window != last {
            let boundary = self.next_window + 2 * self.window_size;
            if boundary >= self.num_warmup - self.term_buffer {
                self.next_window = last;
            }
        }
    }

    /// Records `q`; at the end of a window overwrites `inv_metric` and
    /// returns true.
    fn learn_variance(&mut self, inv_metric: &mut [f64], q: &[f64]) -> bool {
        if !self.adapt_metric {
            return false;
        }
        if self.in_window() {
            self.n += 1;
            let n = self.n as f64;
            for i in 0..q.len() {
                let d = q[i] - self.mean[i];
                self.mean[i] += d / n;
                self.m2[i] += d * (q[i] - self.mean[i]);
            }
        }
        if self.window_end() {
            self.compute_next_window();
            let n = self.n as f64;
            for i in 0..inv_metric.len() {
                let var = if self.n > 1 { self.m2[i] / (n - 1.0) } else { 1.0 };
                inv_metric[i] = (n / (n + 5.0)) * var + 1e-3 * (5.0 / (n + 5.0));
            }
            self.n = 0;
            self.mean.iter_mut().for_each(|m| *m = 0.0);
            self.m2.iter_mut().for_each(|m| *m = 0.0);
            self.window_counter += 1;
            return true;
        }
        self.window_counter += 1;
        false
    }
}
