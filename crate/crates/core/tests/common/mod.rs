//! Independent numerical oracles shared by the integration tests.
#![allow(dead_code)]

use automarg::compgraph::Evaluator;
use automarg::model::{Assignment, GraphicalModel, NodeId, ObservedMode};
use automarg::zoo::ZooEntry;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// 15-point Kronrod estimate and the embedded 7-point Gauss estimate.
fn gk15(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    for i in 0..7 {
        let dx = h * XGK[i];
        let s = f(c - dx) + f(c + dx);
        k += WGK[i] * s;
        if i % 2 == 1 {
            g += WG[i / 2] * s;
        }
    }
    (k * h, g * h)
}

fn adapt(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
    let (k, g) = gk15(f, a, b);
    if depth == 0 || (k - g).abs() <= tol {
        return k;
    }
    let m = 0.5 * (a + b);
    adapt(f, a, m, tol / 2.0, depth - 1) + adapt(f, m, b, tol / 2.0, depth - 1)
}

/// Adaptive Gauss-Kronrod quadrature on a finite interval, starting from
/// `pieces` equal panels so narrow peaks are not missed.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, pieces: usize, tol: f64) -> f64 {
    let w = (b - a) / pieces as f64;
    (0..pieces)
        .map(|i| adapt(&f, a + i as f64 * w, a + (i + 1) as f64 * w, tol / pieces as f64, 40))
        .sum()
}

/// Integral over `(a, inf)` through `x = a + t / (1 - t)`.
pub fn integrate_upper(f: impl Fn(f64) -> f64, a: f64, tol: f64) -> f64 {
    integrate(
        |t| {
            let x = a + t / (1.0 - t);
            let v = f(x) / ((1.0 - t) * (1.0 - t));
            if v.is_finite() {
                v
            } else {
                0.0
            }
        },
        0.0,
        1.0,
        256,
        tol,
    )
}

/// Integral over the real line through `x = t / (1 - t^2)`.
pub fn integrate_line(f: impl Fn(f64) -> f64, tol: f64) -> f64 {
    integrate(
        |t| {
            let d = 1.0 - t * t;
            let v = f(t / d) * (1.0 + t * t) / (d * d);
            if v.is_finite() {
                v
            } else {
                0.0
            }
        },
        -1.0,
        1.0,
        512,
        tol,
    )
}

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-x / std::f64::consts::SQRT_2)
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

pub fn variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() as f64 - 1.0)
}

pub fn quantile(x: &[f64], q: f64) -> f64 {
    let mut s = x.to_vec();
    s.sort_by(f64::total_cmp);
    s[((s.len() - 1) as f64 * q).round() as usize]
}

/// Mean and variance z-scores between two independent samples.
pub fn moment_z(a: &[f64], b: &[f64]) -> (f64, f64) {
    let stats = |x: &[f64]| {
        let n = x.len() as f64;
        let m = mean(x);
        let v = x.iter().map(|y| (y - m).powi(2)).sum::<f64>() / n;
        let m4 = x.iter().map(|y| (y - m).powi(4)).sum::<f64>() / n;
        (n, m, v, m4)
    };
    let (na, ma, va, m4a) = stats(a);
    let (nb, mb, vb, m4b) = stats(b);
    let z_mean = (ma - mb) / (va / na + vb / nb).sqrt();
    let se_var = ((m4a - va * va) / na + (m4b - vb * vb) / nb).sqrt();
    let z_var = if se_var > 0.0 { (va - vb) / se_var } else { 0.0 };
    (z_mean, z_var)
}

/// Maps a sample onto (-pi/2, pi/2) with a robust centering and scale taken
/// from `reference`, so heavy-tailed variables get finite moments.
pub fn robust_transform(reference: &[f64]) -> impl Fn(f64) -> f64 {
    let med = quantile(reference, 0.5);
    let iqr = quantile(reference, 0.75) - quantile(reference, 0.25);
    let scale = if iqr > 0.0 { iqr } else { 1.0 };
    move |x| ((x - med) / scale).atan()
}

/// Log joint written independently of the engine: eight schools with the
/// model's observed values.
pub fn eight_schools_oracle(mu: f64, tau: f64, x: &[f64], y: &[f64], sigma: &[f64]) -> f64 {
    let ln_norm =
        |x: f64, m: f64, s: f64| -0.5 * ((x - m) / s).powi(2) - s.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln();
    let half_cauchy = |x: f64, s: f64| (2.0 / std::f64::consts::PI).ln() - s.ln() - (1.0 + (x / s).powi(2)).ln();
    let mut lp = ln_norm(mu, 0.0, 5.0) + half_cauchy(tau, 5.0);
    for i in 0..8 {
        lp += ln_norm(x[i], mu, tau) + ln_norm(y[i], x[i], sigma[i]);
    }
    lp
}

/// Joint prior-predictive draw (observed nodes resampled too) with a finite
/// log joint. Heavy-tailed priors occasionally underflow a Beta draw to
/// exactly 0 or 1.
pub fn finite_point<R: rand::Rng>(model: &GraphicalModel, rng: &mut R) -> Assignment {
    for _ in 0..1000 {
        let a = model.forward_sample(rng, ObservedMode::Resample).unwrap();
        if log_joint_at(model, &a).is_finite() {
            return a;
        }
    }
    panic!("no prior draw with finite log joint");
}

/// Log joint with every node, observed ones included, valued from `a`.
/// Summed directly from the family densities.
pub fn log_joint_at(model: &GraphicalModel, a: &Assignment) -> f64 {
    let mut eval = Evaluator::new(model.graph());
    model.live_nodes().map(|id| factor_at(model, &mut eval, id, a)).sum()
}

/// Log density factor of one node with every value taken from `a`.
pub fn factor_at(model: &GraphicalModel, eval: &mut Evaluator<'_>, id: NodeId, a: &Assignment) -> f64 {
    let dist = &model.node(id).dist;
    let p: Vec<f64> = dist
        .params
        .iter()
        .map(|&e| eval.eval(e, |v| a.get(v)).unwrap())
        .collect();
    automarg::dists::log_density(dist.family, &p, a.get(id).unwrap()).unwrap()
}

/// Evaluates every parameter of `node` at `a`.
pub fn params(model: &GraphicalModel, name: &str, a: &Assignment) -> Vec<f64> {
    let id = model.id(name).unwrap();
    let mut eval = Evaluator::new(model.graph());
    model.eval_params(&mut eval, id, a).unwrap()
}

pub fn zoo_globs(entry: &ZooEntry) -> Vec<glob::Pattern> {
    automarg::transform::compile_globs(&entry.exempt).unwrap()
}

/// Unconstrained points from a short NUTS run: the region where the sampler
/// actually evaluates gradients.
pub fn posterior_points(
    f: &automarg::grad::LogDensityFn,
    model: &GraphicalModel,
    n: usize,
    seed: u64,
) -> Vec<Vec<f64>> {
    if f.dim() == 0 {
        return vec![Vec::new(); n];
    }
    let cfg = automarg::sampler::NutsConfig {
        warmup: 150,
        draws: n,
        seed,
        ..Default::default()
    };
    let chain = automarg::sampler::run_chain(f, &cfg, 0).unwrap();
    let ids: Vec<_> = f.latents().iter().map(|l| l.id).collect();
    (0..chain.len())
        .map(|i| {
            let a: Assignment = ids.iter().copied().zip(chain.row(i).iter().copied()).collect();
            f.unconstrain(model, &a).unwrap()
        })
        .collect()
}
