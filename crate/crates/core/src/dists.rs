//! Densities, samplers and unconstraining bijections for every supported
//! distribution family.
//!
//! Parameters are passed positionally in the order given by
//! [`Family::param_names`]. Normal takes a variance (not a standard
//! deviation) and Gamma takes a rate, which is the form the reversal
//! updates are written in.

use std::f64::consts::{LN_2, PI};
use std::fmt;

use rand::Rng;
use rand_distr::{Distribution as _, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{digamma, ln_gamma};
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Family {
    /// `(mean, variance)`
    Normal,
    /// `(scale)`
    HalfCauchy,
    /// `(location, scale)`
    Cauchy,
    /// `(alpha, beta)`
    Beta,
    /// `(n, p)`
    Binomial,
    /// `(p)`
    Bernoulli,
    /// `(shape, rate)`
    Gamma,
    /// `(rate)`
    Exponential,
    /// `(low, high)`
    Uniform,
    /// `(scale, shape)`
    Pareto,
    /// `(n, alpha, beta)`
    BetaBinomial,
    /// `(shape, prior_shape, scale)`: a Gamma(shape, rate = w) variable whose
    /// rate is itself Gamma(prior_shape, rate = scale).
    CompoundGamma,
}

impl Family {
    pub const ALL: [Family; 12] = [
        Family::Normal,
        Family::HalfCauchy,
        Family::Cauchy,
        Family::Beta,
        Family::Binomial,
        Family::Bernoulli,
        Family::Gamma,
        Family::Exponential,
        Family::Uniform,
        Family::Pareto,
        Family::BetaBinomial,
        Family::CompoundGamma,
    ];

    pub fn param_names(self) -> &'static [&'static str] {
        match self {
            Family::Normal => &["mean", "variance"],
            Family::HalfCauchy => &["scale"],
            Family::Cauchy => &["loc", "scale"],
            Family::Beta => &["alpha", "beta"],
            Family::Binomial => &["n", "p"],
            Family::Bernoulli => &["p"],
            Family::Gamma => &["shape", "rate"],
            Family::Exponential => &["rate"],
            Family::Uniform => &["low", "high"],
            Family::Pareto => &["scale", "shape"],
            Family::BetaBinomial => &["n", "alpha", "beta"],
            Family::CompoundGamma => &["shape", "prior_shape", "scale"],
        }
    }

    pub fn arity(self) -> usize {
        self.param_names().len()
    }

    pub fn is_discrete(self) -> bool {
        matches!(self, Family::Binomial | Family::Bernoulli | Family::BetaBinomial)
    }

    pub fn name(self) -> &'static str {
        match self {
            Family::Normal => "Normal",
            Family::HalfCauchy => "HalfCauchy",
            Family::Cauchy => "Cauchy",
            Family::Beta => "Beta",
            Family::Binomial => "Binomial",
            Family::Bernoulli => "Bernoulli",
            Family::Gamma => "Gamma",
            Family::Exponential => "Exponential",
            Family::Uniform => "Uniform",
            Family::Pareto => "Pareto",
            Family::BetaBinomial => "BetaBinomial",
            Family::CompoundGamma => "CompoundGamma",
        }
    }

    /// Support test that needs no parameter values (integrality, sign,
    /// unit interval).
    pub fn in_base_support(self, x: f64) -> bool {
        if !x.is_finite() {
            return false;
        }
        match self {
            Family::Normal | Family::Cauchy | Family::Uniform | Family::Pareto => true,
            Family::HalfCauchy | Family::Exponential => x >= 0.0,
            Family::Gamma | Family::CompoundGamma => x > 0.0,
            Family::Beta => x > 0.0 && x < 1.0,
            Family::Bernoulli => x == 0.0 || x == 1.0,
            Family::Binomial | Family::BetaBinomial => x >= 0.0 && x.fract() == 0.0,
        }
    }

    /// Full support test given concrete parameters.
    pub fn in_support(self, params: &[f64], x: f64) -> bool {
        if !self.in_base_support(x) {
            return false;
        }
        match self {
            Family::Binomial | Family::BetaBinomial => x <= params[0],
            Family::Uniform => x >= params[0] && x <= params[1],
            Family::Pareto => x >= params[0],
            _ => true,
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DistError {
    #[error("{family} expects {expected} parameters, got {got}")]
    Arity {
        family: Family,
        expected: usize,
        got: usize,
    },
    #[error("invalid {family} parameter {name} = {value}")]
    InvalidParam {
        family: Family,
        name: &'static str,
        value: f64,
    },
    #[error("{0} is discrete and has no unconstraining bijection")]
    Discrete(Family),
}

fn is_count(n: f64) -> bool {
    n.is_finite() && n >= 0.0 && n.fract() == 0.0
}

/// Checks parameter validity for `family`.
pub fn validate(family: Family, params: &[f64]) -> Result<(), DistError> {
    if params.len() != family.arity() {
        return Err(DistError::Arity {
            family,
            expected: family.arity(),
            got: params.len(),
        });
    }
    let names = family.param_names();
    let bad = |i: usize| DistError::InvalidParam {
        family,
        name: names[i],
        value: params[i],
    };
    let positive = |i: usize| {
        if params[i] > 0.0 && params[i].is_finite() {
            Ok(())
        } else {
            Err(bad(i))
        }
    };
    match family {
        Family::Normal | Family::Cauchy => {
            if !params[0].is_finite() {
                return Err(bad(0));
            }
            positive(1)
        }
        Family::HalfCauchy | Family::Exponential => positive(0),
        Family::Beta | Family::Gamma => positive(0).and(positive(1)),
        Family::Pareto => positive(0).and(positive(1)),
        Family::CompoundGamma => positive(0).and(positive(1)).and(positive(2)),
        Family::Binomial => {
            if !is_count(params[0]) {
                return Err(bad(0));
            }
            if !(0.0..=1.0).contains(&params[1]) {
                return Err(bad(1));
            }
            Ok(())
        }
        Family::Bernoulli => {
            if !(0.0..=1.0).contains(&params[0]) {
                return Err(bad(0));
            }
            Ok(())
        }
        Family::BetaBinomial => {
            if !is_count(params[0]) {
                return Err(bad(0));
            }
            positive(1).and(positive(2))
        }
        Family::Uniform => {
            if !params[0].is_finite() {
                return Err(bad(0));
            }
            if !(params[1].is_finite() && params[1] > params[0]) {
                return Err(bad(1));
            }
            Ok(())
        }
    }
}

pub(crate) fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// `ln Γ(x + k) - ln Γ(x)` for `x > 0`, `k >= 0`. The plain difference
/// loses every digit once `x` is near 1e16, which happens when a
/// concentration parameter drifts far into its tail.
pub(crate) fn ln_rising(x: f64, k: f64) -> f64 {
    if k == 0.0 {
        return 0.0;
    }
    if k.fract() == 0.0 && k <= 64.0 {
        return (0..k as u32).map(|i| (x + f64::from(i)).ln()).sum();
    }
    if x >= 1e3 {
        // Difference of Stirling series, each term formed without cancellation.
        let z = x + k;
        let cubic = (1.0 / (z * z * z) - 1.0 / (x * x * x)) / 360.0;
        return (x - 0.5) * (k / x).ln_1p() + k * z.ln() - k - k / (12.0 * x * z) - cubic;
    }
    ln_gamma(x + k) - ln_gamma(x)
}

/// `ψ(x + k) - ψ(x)`, the derivative of [`ln_rising`] in `x`.
pub(crate) fn digamma_diff(x: f64, k: f64) -> f64 {
    if k == 0.0 {
        return 0.0;
    }
    if k.fract() == 0.0 && k <= 64.0 {
        return (0..k as u32).map(|i| 1.0 / (x + f64::from(i))).sum();
    }
    if x >= 1e3 {
        let z = x + k;
        let quartic = (1.0 / z.powi(4) - 1.0 / x.powi(4)) / 120.0;
        return (k / x).ln_1p() + k / (2.0 * x * z) + k * (x + z) / (12.0 * x * x * z * z) + quartic;
    }
    digamma(x + k) - digamma(x)
}

pub(crate) fn ln_choose(n: f64, k: f64) -> f64 {
    if k == 0.0 || k == n {
        return 0.0;
    }
    ln_gamma(n + 1.0) - ln_gamma(k + 1.0) - ln_gamma(n - k + 1.0)
}

// x * ln(p) with the convention 0 * ln(0) = 0.
fn xlogy(x: f64, y: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * y.ln()
    }
}

/// Natural-log density (or mass) of `x`. Out-of-support values give
/// negative infinity; invalid parameters are an error.
pub fn log_density(family: Family, params: &[f64], x: f64) -> Result<f64, DistError> {
    validate(family, params)?;
    if !family.in_support(params, x) {
        return Ok(f64::NEG_INFINITY);
    }
    let p = params;
    let lp = match family {
        Family::Normal => {
            let d = x - p[0];
            -0.5 * (2.0 * PI * p[1]).ln() - d * d / (2.0 * p[1])
        }
        Family::HalfCauchy => {
            let z = x / p[0];
            LN_2 - (PI * p[0]).ln() - (z * z).ln_1p()
        }
        Family::Cauchy => {
            let z = (x - p[0]) / p[1];
            -(PI * p[1]).ln() - (z * z).ln_1p()
        }
        Family::Beta => (p[0] - 1.0) * x.ln() + (p[1] - 1.0) * (-x).ln_1p() - ln_beta(p[0], p[1]),
        Family::Binomial => ln_choose(p[0], x) + xlogy(x, p[1]) + xlogy(p[0] - x, 1.0 - p[1]),
        Family::Bernoulli => {
            if x == 1.0 {
                p[0].ln()
            } else {
                (1.0 - p[0]).ln()
            }
        }
        Family::Gamma => p[0] * p[1].ln() - ln_gamma(p[0]) + (p[0] - 1.0) * x.ln() - p[1] * x,
        Family::Exponential => p[0].ln() - p[0] * x,
        Family::Uniform => -(p[1] - p[0]).ln(),
        Family::Pareto => p[1].ln() + p[1] * p[0].ln() - (p[1] + 1.0) * x.ln(),
        Family::BetaBinomial => {
            let (n, a, b) = (p[0], p[1], p[2]);
            ln_choose(n, x) + ln_rising(a, x) + ln_rising(b, n - x) - ln_rising(a + b, n)
        }
        Family::CompoundGamma => {
            let (a, b, q) = (p[0], p[1], p[2]);
            ln_rising(a, b) - ln_gamma(b) + b * q.ln() + (a - 1.0) * x.ln() - (a + b) * (q + x).ln()
        }
    };
    Ok(lp)
}

fn gamma_rate<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> f64 {
    rand_distr::Gamma::new(shape, 1.0 / rate)
        .expect("validated gamma parameters")
        .sample(rng)
}

fn binomial<R: Rng + ?Sized>(n: f64, p: f64, rng: &mut R) -> f64 {
    rand_distr::Binomial::new(n as u64, p)
        .expect("validated binomial parameters")
        .sample(rng) as f64
}

fn beta<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> f64 {
    // Draw through two gammas; rand_distr's Beta rejects some tiny shapes.
    let x = gamma_rate(a, 1.0, rng);
    let y = gamma_rate(b, 1.0, rng);
    let t = x / (x + y);
    if t.is_nan() {
        if a >= b {
            1.0
        } else {
            0.0
        }
    } else {
        t
    }
}

/// Draws one value.
pub fn sample<R: Rng + ?Sized>(family: Family, params: &[f64], rng: &mut R) -> Result<f64, DistError> {
    validate(family, params)?;
    let p = params;
    let x = match family {
        Family::Normal => {
            let z: f64 = StandardNormal.sample(rng);
            p[0] + p[1].sqrt() * z
        }
        Family::HalfCauchy => {
            let u: f64 = rng.random();
            p[0] * (0.5 * PI * u).tan()
        }
        Family::Cauchy => {
            let u: f64 = rng.random();
            p[0] + p[1] * (PI * (u - 0.5)).tan()
        }
        Family::Beta => beta(p[0], p[1], rng),
        Family::Binomial => binomial(p[0], p[1], rng),
        Family::Bernoulli => {
            let u: f64 = rng.random();
            if u < p[0] {
                1.0
            } else {
                0.0
            }
        }
        Family::Gamma => gamma_rate(p[0], p[1], rng),
        Family::Exponential => {
            let e: f64 = rand_distr::Exp1.sample(rng);
            e / p[0]
        }
        Family::Uniform => {
            let u: f64 = rng.random();
            p[0] + (p[1] - p[0]) * u
        }
        Family::Pareto => {
            let u: f64 = rng.random();
            p[0] * (1.0 - u).powf(-1.0 / p[1])
        }
        Family::BetaBinomial => {
            let theta = beta(p[1], p[2], rng);
            binomial(p[0], theta, rng)
        }
        Family::CompoundGamma => {
            let rate = gamma_rate(p[1], p[2], rng);
            gamma_rate(p[0], rate, rng)
        }
    };
    Ok(x)
}

/// Map from a family's support onto the real line.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Bijection {
    Identity,
    /// `u = ln(x - shift)`
    Log {
        shift: f64,
    },
    /// `u = logit((x - low) / (high - low))`
    Logit {
        low: f64,
        high: f64,
    },
}

impl Bijection {
    /// Constrained to unconstrained.
    pub fn forward(&self, x: f64) -> f64 {
        match *self {
            Bijection::Identity => x,
            Bijection::Log { shift } => (x - shift).ln(),
            Bijection::Logit { low, high } => {
                let t = (x - low) / (high - low);
                t.ln() - (-t).ln_1p()
            }
        }
    }

    /// Unconstrained to constrained.
    pub fn inverse(&self, u: f64) -> f64 {
        match *self {
            Bijection::Identity => u,
            Bijection::Log { shift } => shift + u.exp(),
            Bijection::Logit { low, high } => low + (high - low) * sigmoid(u),
        }
    }

    /// `ln |d inverse / du|` at `u`.
    pub fn log_abs_det_jacobian(&self, u: f64) -> f64 {
        match *self {
            Bijection::Identity => 0.0,
            Bijection::Log { .. } => u,
            Bijection::Logit { low, high } => (high - low).ln() - softplus(u) - softplus(-u),
        }
    }
}

pub(crate) fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Which kind of bijection a family uses; parameters are filled in later.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BijectionKind {
    Identity,
    Log,
    /// Log of the distance above the first parameter.
    LogAboveParam0,
    /// Scaled logit between the first two parameters.
    LogitBetweenParams,
    UnitLogit,
}

impl BijectionKind {
    pub fn of(family: Family) -> Result<Self, DistError> {
        Ok(match family {
            Family::Normal | Family::Cauchy => BijectionKind::Identity,
            Family::HalfCauchy | Family::Gamma | Family::Exponential | Family::CompoundGamma => BijectionKind::Log,
            Family::Beta => BijectionKind::UnitLogit,
            Family::Uniform => BijectionKind::LogitBetweenParams,
            Family::Pareto => BijectionKind::LogAboveParam0,
            Family::Binomial | Family::Bernoulli | Family::BetaBinomial => return Err(DistError::Discrete(family)),
        })
    }
}

/// The bijection used to move `family` (with these parameters) to the
/// real line.
pub fn unconstraining(family: Family, params: &[f64]) -> Result<Bijection, DistError> {
    let kind = BijectionKind::of(family)?;
    validate(family, params)?;
    Ok(match kind {
        BijectionKind::Identity => Bijection::Identity,
        BijectionKind::Log => Bijection::Log { shift: 0.0 },
        BijectionKind::LogAboveParam0 => Bijection::Log { shift: params[0] },
        BijectionKind::UnitLogit => Bijection::Logit { low: 0.0, high: 1.0 },
        BijectionKind::LogitBetweenParams => Bijection::Logit {
            low: params[0],
            high: params[1],
        },
    })
}
