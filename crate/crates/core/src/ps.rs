//! Per-source model of the probabilistic scheduler (PS).
//!
//! From the viewpoint of source `n`, the shared server either serves a
//! source-`n` packet or is "on vacation" serving someone else; at every
//! shared completion it picks source `n` with probability `p_n`. The tagged
//! packet chain uses ten transient states, numbered 1..=10 and stored at
//! index `state - 1`:
//!
//! | state | meaning |
//! |---|---|
//! | 1 | tagged on dedicated, shared on vacation |
//! | 2 | tagged on dedicated, shared busy, dedicated newer |
//! | 3 | tagged on dedicated, shared busy, shared newer |
//! | 4 | tagged on shared, dedicated older or equal |
//! | 5 | tagged on shared, dedicated newer |
//! | 6 | delivered; dedicated fresh, shared on vacation |
//! | 7 | delivered; dedicated fresh, shared obsolete |
//! | 8 | delivered; dedicated obsolete, shared fresh |
//! | 9 | delivered; both fresh |
//! | 10 | delivered; dedicated obsolete, shared on vacation |
//!
//! States 11 and 12 are the unsuccessful and successful absorbing states.

use nalgebra::DMatrix;

use crate::chain::{
    mean_aoi, stationary_distribution, AbsorbingChain, Absorption, ChainBuilder, RecurrentChain,
};
use crate::error::{check_probability, check_rate, AoiError, Result};
use crate::system::{Pmf, SystemSpec};

pub const PS_TRANSIENT_STATES: usize = 10;

fn check_inputs(mu_n: f64, mu: f64, p: f64) -> Result<()> {
    check_rate("mu_n", mu_n)?;
    check_rate("mu", mu)?;
    check_probability("p_n", p)
}

/// Absorbing chain of the tagged source-`n` packet under PS.
pub fn build_ps_amc(mu_n: f64, mu: f64, p: f64) -> Result<AbsorbingChain> {
    check_inputs(mu_n, mu, p)?;
    let q = 1.0 - p;
    let s = |state: usize| state - 1;
    let mut b = ChainBuilder::new(PS_TRANSIENT_STATES);
    b.transition(s(1), s(6), mu_n)
        .transition(s(1), s(3), p * mu);

    b.transition(s(2), s(7), mu_n)
        .transition(s(2), s(3), p * mu)
        .transition(s(2), s(1), q * mu);

    b.transition(s(3), s(9), mu_n)
        .absorb(s(3), Absorption::Unsuccessful, mu);

    b.transition(s(4), s(5), mu_n)
        .transition(s(4), s(8), p * mu)
        .transition(s(4), s(10), q * mu);

    b.absorb(s(5), Absorption::Unsuccessful, mu_n)
        .transition(s(5), s(9), p * mu)
        .transition(s(5), s(6), q * mu);

    b.absorb(s(6), Absorption::Successful, mu_n)
        .transition(s(6), s(9), p * mu);

    b.absorb(s(7), Absorption::Successful, mu_n)
        .transition(s(7), s(9), p * mu)
        .transition(s(7), s(6), q * mu);

    b.transition(s(8), s(9), mu_n)
        .absorb(s(8), Absorption::Successful, mu);

    b.absorb(s(9), Absorption::Successful, mu_n + mu);

    b.transition(s(10), s(6), mu_n)
        .transition(s(10), s(8), p * mu);

    let entry = mu_n + p * mu;
    b.initial(s(1), q * mu_n / entry)
        .initial(s(2), p * mu_n / entry)
        .initial(s(4), p * mu / entry);
    for state in 6..=10 {
        b.mark_cycle(s(state));
    }
    Ok(b.build())
}

/// Generator of the three-state recurrent chain `R1, R2, R3`.
pub fn ps_rmc(mu_n: f64, mu: f64, p: f64) -> Result<RecurrentChain> {
    check_inputs(mu_n, mu, p)?;
    let q = 1.0 - p;
    #[rustfmt::skip]
    let rates = DMatrix::from_row_slice(3, 3, &[
        0.0,    0.0,  p * mu,
        q * mu, 0.0,  p * mu,
        q * mu, mu_n, 0.0,
    ]);
    RecurrentChain::from_rates(rates)
}

/// Stationary distribution `[q_n, p_n mu_n/(mu_n+mu), p_n mu/(mu_n+mu)]`,
/// cross-checked against a numerical solve of the generator.
pub fn ps_rmc_stationary(mu_n: f64, mu: f64, p: f64) -> Result<[f64; 3]> {
    check_inputs(mu_n, mu, p)?;
    let closed = [1.0 - p, p * mu_n / (mu_n + mu), p * mu / (mu_n + mu)];
    let numeric = stationary_distribution(&ps_rmc(mu_n, mu, p)?)?;
    let gap = closed
        .iter()
        .zip(numeric.iter())
        .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
    if gap > 1e-10 {
        return Err(AoiError::SelfCheck(format!(
            "PS stationary closed form disagrees with numeric solve by {gap:e}"
        )));
    }
    Ok(closed)
}

/// Mean AoI of source `n` under PS, via the absorbing chain.
pub fn ps_mean_aoi_numeric(mu_n: f64, mu: f64, p: f64) -> Result<f64> {
    mean_aoi(&build_ps_amc(mu_n, mu, p)?)
}

/// Closed-form mean AoI of source `n` under PS.
pub fn ps_closed_form(mu_n: f64, mu: f64, p: f64) -> Result<f64> {
    check_inputs(mu_n, mu, p)?;
    Ok(ps_closed_form_unchecked(mu_n, mu, p))
}

pub(crate) fn ps_closed_form_unchecked(mu_n: f64, mu: f64, p: f64) -> f64 {
    let s = mu_n + mu;
    let y = p * mu + mu_n;
    let num = p * p * mu * mu * (2.0 * mu_n + mu)
        + p * mu * (2.0 * mu_n + mu).powi(2)
        + 2.0 * mu_n * s * s;
    num / (s * s * y * y)
}

/// Per-source mean AoI under PS, in source order.
pub fn ps_per_source_aoi(spec: &SystemSpec, pmf: &Pmf) -> Result<Vec<f64>> {
    pmf.ensure_len(spec.num_sources())?;
    spec.mu_dedicated()
        .iter()
        .zip(pmf.probs())
        .map(|(&mu_n, &p)| ps_closed_form(mu_n, spec.mu_shared(), p))
        .collect()
}

/// `sum_n w_n E[age_n]` under PS.
pub fn ps_weighted_aoi(spec: &SystemSpec, pmf: &Pmf) -> Result<f64> {
    Ok(spec.weighted_sum(&ps_per_source_aoi(spec, pmf)?))
}
