//! Optimal probabilistic scheduler by KKT water-filling.
//!
//! With `y_n = p_n mu + mu_n` the weighted PS age is
//! `sum_n (a_n / y_n + b_n / y_n^2) + const`, minimized subject to
//! `sum_n y_n = eta = mu + sum_n mu_n` and `y_n >= mu_n`. For a common
//! multiplier `lambda`, each unclamped coordinate is the positive root of
//! `lambda y^3 - a_n y - 2 b_n = 0`; clamped coordinates sit at `mu_n`.
//! `lambda` is found by bisection since `sum_n y_n(lambda)` is
//! non-increasing.
//!
//! Both `a_n` and `b_n` carry the weight `w_n`.
//!
//! The solve runs in time units where `mu = 1`. The optimal pmf is
//! invariant under a common rescaling of all rates, and in those units the
//! tolerance on `sum_n y_n` is directly a tolerance on `sum_n p_n`.

use crate::error::{AoiError, Result};
use crate::system::{Pmf, SystemSpec};

pub const DEFAULT_EPSILON: f64 = 1e-9;
pub const MAX_ITERATIONS: usize = 500;

/// Coefficients of the separable objective.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveTerms {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub eta: f64,
    /// `sum_n w_n (2 mu_n + mu) / (mu_n + mu)^2`, the part independent of `p`.
    pub constant: f64,
}

impl ObjectiveTerms {
    pub fn value(&self, y: &[f64]) -> f64 {
        self.a
            .iter()
            .zip(&self.b)
            .zip(y)
            .map(|((a, b), y)| a / y + b / (y * y))
            .sum::<f64>()
            + self.constant
    }
}

pub fn objective_terms(spec: &SystemSpec) -> ObjectiveTerms {
    let mu = spec.mu_shared();
    let mut a = Vec::with_capacity(spec.num_sources());
    let mut b = Vec::with_capacity(spec.num_sources());
    let mut constant = 0.0;
    for (&mu_n, &w) in spec.mu_dedicated().iter().zip(spec.weights()) {
        let s = mu_n + mu;
        a.push(w * (2.0 * mu_n + mu) * mu / (s * s));
        b.push(w * mu * mu_n / s);
        constant += w * (2.0 * mu_n + mu) / (s * s);
    }
    ObjectiveTerms {
        a,
        b,
        eta: mu + spec.mu_dedicated().iter().sum::<f64>(),
        constant,
    }
}

/// Unique positive root of `lambda y^3 - a y - 2 b = 0` (`lambda, b > 0`, `a >= 0`).
pub fn cardano_positive_root(lambda: f64, a: f64, b: f64) -> Result<f64> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(AoiError::Domain(format!(
            "lambda must be > 0, got {lambda}"
        )));
    }
    if !(b > 0.0 && b.is_finite()) {
        return Err(AoiError::Domain(format!("b must be > 0, got {b}")));
    }
    if !(a >= 0.0 && a.is_finite()) {
        return Err(AoiError::Domain(format!("a must be >= 0, got {a}")));
    }
    // y^3 - 3 s y - 2 q = 0
    let s = a / (3.0 * lambda);
    let q = b / lambda;
    let disc = q * q - s * s * s;
    let mut y = if disc >= 0.0 {
        let u = (q + disc.sqrt()).cbrt();
        // second cube root from u v = s, avoiding cancellation in q - sqrt(disc)
        u + s / u
    } else {
        let r = s.sqrt();
        let arg = (q / (s * r)).clamp(-1.0, 1.0);
        2.0 * r * (arg.acos() / 3.0).cos()
    };
    for _ in 0..2 {
        let f = lambda * y * y * y - a * y - 2.0 * b;
        let df = 3.0 * lambda * y * y - a;
        if df <= 0.0 {
            break;
        }
        let next = y - f / df;
        if !(next > 0.0) || (lambda * next.powi(3) - a * next - 2.0 * b).abs() >= f.abs() {
            break;
        }
        y = next;
    }
    Ok(y)
}

/// Converged water-filling state, in the caller's time units.
#[derive(Debug, Clone, PartialEq)]
pub struct WaterfillState {
    pub lambda: f64,
    pub y: Vec<f64>,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub eta: f64,
    pub iterations: usize,
}

fn normalized(spec: &SystemSpec) -> SystemSpec {
    let mu = spec.mu_shared();
    let mu_n = spec.mu_dedicated().iter().map(|m| m / mu).collect();
    SystemSpec::relaxed(1.0, mu_n, spec.weights().to_vec()).expect("rescaled spec stays valid")
}

fn filled(terms: &ObjectiveTerms, floors: &[f64], lambda: f64) -> Vec<f64> {
    terms
        .a
        .iter()
        .zip(&terms.b)
        .zip(floors)
        .map(|((&a, &b), &floor)| {
            cardano_positive_root(lambda, a, b)
                .expect("coefficients are positive")
                .max(floor)
        })
        .collect()
}

/// Run the bisection and return the converged state.
pub fn waterfill(spec: &SystemSpec, epsilon: f64) -> Result<WaterfillState> {
    if !(epsilon > 0.0) {
        return Err(AoiError::Domain(format!(
            "epsilon must be > 0, got {epsilon}"
        )));
    }
    let mu = spec.mu_shared();
    let unit = normalized(spec);
    let terms = objective_terms(&unit);
    let floors = unit.mu_dedicated();
    let total = |lambda: f64| filled(&terms, floors, lambda).iter().sum::<f64>();

    let mut lo = 1e-12;
    let mut hi = 1.0;
    let mut guard = 0;
    while total(hi) > terms.eta {
        hi *= 2.0;
        guard += 1;
        if guard > 2000 {
            return Err(AoiError::NoConvergence {
                iterations: guard,
                residual: total(hi) - terms.eta,
            });
        }
    }
    while total(lo) < terms.eta {
        lo *= 0.5;
        guard += 1;
        if guard > 2000 || lo == 0.0 {
            return Err(AoiError::NoConvergence {
                iterations: guard,
                residual: terms.eta - total(lo),
            });
        }
    }

    let mut iterations = 0;
    let (lambda, y) = loop {
        iterations += 1;
        let lambda = 0.5 * (lo + hi);
        let y = filled(&terms, floors, lambda);
        let sum: f64 = y.iter().sum();
        if (sum - terms.eta).abs() <= epsilon {
            break (lambda, y);
        }
        if iterations >= MAX_ITERATIONS {
            return Err(AoiError::NoConvergence {
                iterations,
                residual: (sum - terms.eta).abs(),
            });
        }
        if sum > terms.eta {
            lo = lambda;
        } else {
            hi = lambda;
        }
    };

    let original = objective_terms(spec);
    Ok(WaterfillState {
        lambda: lambda / (mu * mu),
        y: y.iter().map(|v| v * mu).collect(),
        a: original.a,
        b: original.b,
        eta: original.eta,
        iterations,
    })
}

/// Optimal PS pmf.
pub fn optimize_ps(spec: &SystemSpec, epsilon: f64) -> Result<Pmf> {
    let state = waterfill(spec, epsilon)?;
    let mu = spec.mu_shared();
    let mut p: Vec<f64> = state
        .y
        .iter()
        .zip(spec.mu_dedicated())
        .map(|(y, mu_n)| {
            let v = (y - mu_n) / mu;
            if v < 0.0 && v > -1e-12 {
                0.0
            } else {
                v
            }
        })
        .collect();
    let total: f64 = p.iter().sum();
    p.iter_mut().for_each(|x| *x /= total);
    Pmf::new(p)
}

/// Largest violation of the optimality conditions at `pmf`.
///
/// Measured in `mu = 1` units: the feasibility gap `|sum y - eta|`, the
/// relative disagreement between the multipliers implied by unclamped
/// coordinates, and the relative negativity of the implied multipliers of
/// clamped coordinates.
pub fn kkt_residual(spec: &SystemSpec, pmf: &Pmf) -> Result<f64> {
    pmf.ensure_len(spec.num_sources())?;
    let unit = normalized(spec);
    let terms = objective_terms(&unit);
    let y: Vec<f64> = unit
        .mu_dedicated()
        .iter()
        .zip(pmf.probs())
        .map(|(mu_n, p)| mu_n + p)
        .collect();
    let feasibility = (y.iter().sum::<f64>() - terms.eta).abs();

    let implied = |n: usize| (terms.a[n] * y[n] + 2.0 * terms.b[n]) / y[n].powi(3);
    let active: Vec<usize> = (0..y.len()).filter(|&n| pmf.probs()[n] > 1e-12).collect();
    if active.is_empty() {
        return Ok(f64::INFINITY);
    }
    let lambdas: Vec<f64> = active.iter().map(|&n| implied(n)).collect();
    let lambda = lambdas.iter().sum::<f64>() / lambdas.len() as f64;
    let stationarity = lambdas
        .iter()
        .fold(0.0_f64, |m, l| m.max((l - lambda).abs() / lambda));
    let dual = (0..y.len())
        .filter(|n| !active.contains(n))
        .map(|n| {
            // gamma_n = lambda - implied(n) must be >= 0
            ((implied(n) - lambda) / lambda).max(0.0)
        })
        .fold(0.0_f64, f64::max);
    Ok(feasibility.max(stationarity).max(dual))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ps::ps_weighted_aoi;
    use approx::assert_relative_eq;

    /// Plain bisection on the cubic, independent of the closed form.
    fn bisect_root(lambda: f64, a: f64, b: f64) -> f64 {
        let f = |y: f64| lambda * y * y * y - a * y - 2.0 * b;
        let (mut lo, mut hi) = (0.0, 1.0);
        while f(hi) < 0.0 {
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn objective_terms_single_source() {
        let spec = SystemSpec::new(1.0, vec![1.0], vec![1.0]).unwrap();
        let t = objective_terms(&spec);
        assert_relative_eq!(t.a[0], 0.75);
        assert_relative_eq!(t.b[0], 0.5);
        assert_relative_eq!(t.eta, 2.0);
    }

    #[test]
    fn objective_terms_symmetric_and_fig12() {
        let t = objective_terms(&SystemSpec::equal_weights(3.0, vec![2.0, 2.0]).unwrap());
        assert_eq!(t.a[0], t.a[1]);
        assert_eq!(t.b[0], t.b[1]);

        let spec = SystemSpec::equal_weights(1.0, vec![4.0, 7.0, 10.0]).unwrap();
        let t = objective_terms(&spec);
        let w = 1.0 / 3.0;
        // substitution with mu = 1
        assert_relative_eq!(t.a[0], w * 9.0 / 25.0, max_relative = 1e-15);
        assert_relative_eq!(t.a[1], w * 15.0 / 64.0, max_relative = 1e-15);
        assert_relative_eq!(t.a[2], w * 21.0 / 121.0, max_relative = 1e-15);
        assert_relative_eq!(t.b[0], w * 4.0 / 5.0, max_relative = 1e-15);
        assert_relative_eq!(t.b[1], w * 7.0 / 8.0, max_relative = 1e-15);
        assert_relative_eq!(t.b[2], w * 10.0 / 11.0, max_relative = 1e-15);
        assert_relative_eq!(t.eta, 22.0);
    }

    #[test]
    fn cardano_examples() {
        assert_relative_eq!(
            cardano_positive_root(1.0, 0.0, 4.0).unwrap(),
            2.0,
            max_relative = 1e-14
        );
        assert_relative_eq!(
            cardano_positive_root(1.0, 3.0, 1.0).unwrap(),
            2.0,
            max_relative = 1e-14
        );
        let oracle = bisect_root(2.0, 2.0, 2.0);
        assert_relative_eq!(oracle, 1.5213797068045676, max_relative = 1e-14);
        assert_relative_eq!(
            cardano_positive_root(2.0, 2.0, 2.0).unwrap(),
            oracle,
            max_relative = 1e-13
        );
    }

    #[test]
    fn cardano_domain_errors() {
        assert!(cardano_positive_root(0.0, 1.0, 1.0).is_err());
        assert!(cardano_positive_root(1.0, 1.0, 0.0).is_err());
        assert!(cardano_positive_root(-1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn cardano_both_branches_and_extremes() {
        for &(l, a, b) in &[
            (1e-12, 1.0, 1.0),
            (1e6, 1e-9, 1e-3),
            (1.0, 100.0, 1e-6), // three real roots
            (3.0, 1e-20, 2.0),
            (0.5, 7.0, 0.1),
        ] {
            let y = cardano_positive_root(l, a, b).unwrap();
            let resid = (l * y * y * y - a * y - 2.0 * b).abs();
            assert!(
                resid <= 1e-10 * (l * y * y * y).max(2.0 * b),
                "({l},{a},{b}) -> {y}: {resid:e}"
            );
            assert_relative_eq!(y, bisect_root(l, a, b), max_relative = 1e-10);
        }
    }

    #[test]
    fn symmetric_system_is_uniform() {
        for n in 1..=5 {
            let spec = SystemSpec::equal_weights(2.5, vec![1.5; n]).unwrap();
            let pmf = optimize_ps(&spec, DEFAULT_EPSILON).unwrap();
            for &p in pmf.probs() {
                assert!((p - 1.0 / n as f64).abs() <= 1e-9, "{:?}", pmf.probs());
            }
        }
    }

    #[test]
    fn lopsided_pair_matches_grid_oracle() {
        let spec = SystemSpec::equal_weights(1.0, vec![100.0, 1.0]).unwrap();
        let pmf = optimize_ps(&spec, DEFAULT_EPSILON).unwrap();
        let mut best = (f64::INFINITY, 0.0);
        for i in 0..=10_000 {
            let p1 = i as f64 / 10_000.0;
            let v = ps_weighted_aoi(&spec, &Pmf::new(vec![p1, 1.0 - p1]).unwrap()).unwrap();
            if v < best.0 {
                best = (v, p1);
            }
        }
        assert!(best.1 <= 1e-4, "grid optimum at p1 = {}", best.1);
        assert!(
            pmf.probs()[0] < 1e-3 && pmf.probs()[1] > 0.999,
            "{:?}",
            pmf.probs()
        );
        let got = ps_weighted_aoi(&spec, &pmf).unwrap();
        assert!(got <= best.0 + 1e-12);
    }

    #[test]
    fn kkt_residual_behaviour() {
        let spec = SystemSpec::new(2.0, vec![0.5, 1.0, 3.0], vec![0.5, 0.3, 0.2]).unwrap();
        let pmf = optimize_ps(&spec, DEFAULT_EPSILON).unwrap();
        assert!(kkt_residual(&spec, &pmf).unwrap() <= 10.0 * DEFAULT_EPSILON);

        let active: Vec<usize> = (0..3).filter(|&n| pmf.probs()[n] > 0.1).collect();
        assert!(active.len() >= 2, "{:?}", pmf.probs());
        let mut moved = pmf.probs().to_vec();
        moved[active[0]] -= 0.05;
        moved[active[1]] += 0.05;
        let moved = Pmf::new(moved).unwrap();
        assert!(kkt_residual(&spec, &moved).unwrap() > 1e-3);

        let uniform = Pmf::uniform(3).unwrap();
        assert!(kkt_residual(&spec, &uniform).unwrap() > 1e-3);
        assert!(ps_weighted_aoi(&spec, &uniform).unwrap() > ps_weighted_aoi(&spec, &pmf).unwrap());
    }

    #[test]
    fn state_is_consistent_in_original_units() {
        let spec = SystemSpec::new(5.0, vec![1.0, 2.0], vec![0.6, 0.4]).unwrap();
        let st = waterfill(&spec, DEFAULT_EPSILON).unwrap();
        assert!((st.y.iter().sum::<f64>() - st.eta).abs() <= 5.0 * 1e-9 * 1.0001);
        for n in 0..2 {
            assert!(st.y[n] >= spec.mu_dedicated()[n]);
            if st.y[n] > spec.mu_dedicated()[n] {
                let implied = (st.a[n] * st.y[n] + 2.0 * st.b[n]) / st.y[n].powi(3);
                assert_relative_eq!(implied, st.lambda, max_relative = 1e-8);
            }
        }
    }

    #[test]
    fn rejects_bad_epsilon() {
        let spec = SystemSpec::new(1.0, vec![1.0], vec![1.0]).unwrap();
        assert!(optimize_ps(&spec, 0.0).is_err());
    }
}
