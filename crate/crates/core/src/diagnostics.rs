//! Effective sample size and small summary statistics.

use serde::Serialize;

/// ESS of one variable.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ess {
    pub ess: f64,
    /// Set when every draw is identical; `ess` is then the draw count.
    pub constant: bool,
}

/// Lazily computed autocovariances of one chain by direct summation.
struct AutoCov<'a> {
    x: &'a [f64],
    mean: f64,
}

impl AutoCov<'_> {
    /// Biased autocovariance at `lag` (divides by n).
    fn at(&self, lag: usize) -> f64 {
        let n = self.x.len();
        let mut s = 0.0;
        for i in 0..n - lag {
            s += (self.x[i] - self.mean) * (self.x[i + lag] - self.mean);
        }
        s / n as f64
    }
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Multi-chain effective sample size with Geyer's initial monotone
/// sequence truncation.
///
/// Chains are truncated to the shortest one. Each must hold at least four
/// draws. The result is capped at the total number of draws. Pooling `k`
/// identical copies of a chain gives exactly `k` times its single-chain ESS
/// (between-chain variance is zero), which is not the same as the ESS of
/// their concatenation.
pub fn ess(chains: &[Vec<f64>]) -> Ess {
    assert!(!chains.is_empty(), "need at least one chain");
    let n = chains.iter().map(Vec::len).min().unwrap_or(0);
    assert!(n >= 4, "need at least four draws per chain");
    let m = chains.len();
    let total = (n * m) as f64;
    let chains: Vec<&[f64]> = chains.iter().map(|c| &c[..n]).collect();
    let acovs: Vec<AutoCov> = chains.iter().map(|c| AutoCov { x: c, mean: mean(c) }).collect();
    let nf = n as f64;
    let chain_var: Vec<f64> = acovs.iter().map(|a| a.at(0) * nf / (nf - 1.0)).collect();
    let mean_var = mean(&chain_var);
    let mut var_plus = mean_var * (nf - 1.0) / nf;
    if m > 1 {
        let means: Vec<f64> = acovs.iter().map(|a| a.mean).collect();
        let grand = mean(&means);
        var_plus += means.iter().map(|x| (x - grand).powi(2)).sum::<f64>() / (m as f64 - 1.0);
    }
    if !(var_plus > 0.0) || !var_plus.is_finite() {
        return Ess {
            ess: total,
            constant: true,
        };
    }
    let rho = |lag: usize| -> f64 {
        let acov = acovs.iter().map(|a| a.at(lag)).sum::<f64>() / m as f64;
        1.0 - (mean_var - acov) / var_plus
    };

    let mut rho_hat = vec![0.0; n];
    let mut rho_even = 1.0;
    rho_hat[0] = rho_even;
    let mut rho_odd = rho(1);
    rho_hat[1] = rho_odd;
    let mut s = 1;
    while s < n - 4 && rho_even + rho_odd > 0.0 {
        rho_even = rho(s + 1);
        rho_odd = rho(s + 2);
        if rho_even + rho_odd >= 0.0 {
            rho_hat[s + 1] = rho_even;
            rho_hat[s + 2] = rho_odd;
        }
        s += 2;
    }
    let max_s = s;
    if rho_even > 0.0 {
        rho_hat[max_s + 1] = rho_even;
    }
    let mut s = 1;
    while s + 3 <= max_s {
        if rho_hat[s + 1] + rho_hat[s + 2] > rho_hat[s - 1] + rho_hat[s] {
            rho_hat[s + 1] = (rho_hat[s - 1] + rho_hat[s]) / 2.0;
            rho_hat[s + 2] = rho_hat[s + 1];
        }
        s += 2;
    }
    let tau = -1.0 + 2.0 * rho_hat[..max_s].iter().sum::<f64>() + rho_hat[max_s + 1];
    Ess {
        ess: (total / tau).min(total),
        constant: false,
    }
}

/// Per-variable ESS of a run plus timing.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EssReport {
    pub per_variable: Vec<(String, f64)>,
    pub min_ess: f64,
    pub wall_time_s: f64,
    pub min_ess_per_s: f64,
    /// Variables whose draws were all identical.
    pub constant: Vec<String>,
}

/// ESS of every named variable (each given as per-chain draws).
pub fn summarize(variables: &[(String, Vec<Vec<f64>>)], wall_time_s: f64) -> EssReport {
    let mut per_variable = Vec::with_capacity(variables.len());
    let mut constant = Vec::new();
    for (name, chains) in variables {
        let e = ess(chains);
        if e.constant {
            log::warn!("draws of {name} are constant; reporting ESS = number of draws");
            constant.push(name.clone());
        }
        per_variable.push((name.clone(), e.ess));
    }
    let min_ess = per_variable.iter().map(|(_, e)| *e).fold(f64::INFINITY, f64::min);
    EssReport {
        per_variable,
        min_ess,
        wall_time_s,
        min_ess_per_s: min_ess / wall_time_s,
        constant,
    }
}

/// Kolmogorov-Smirnov distance between two samples.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Kolmogorov-Smirnov distance between a sample and a continuous CDF.
pub fn ks_one_sample(x: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut x = x.to_vec();
    x.sort_by(f64::total_cmp);
    let n = x.len() as f64;
    x.iter()
        .enumerate()
        .map(|(i, &v)| {
            let f = cdf(v);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}
