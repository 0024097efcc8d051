//! Finite absorbing and recurrent continuous-time Markov chains.
//!
//! An [`AbsorbingChain`] carries the transient sub-generator `U`, the
//! absorption-rate block `V` (column 0 = unsuccessful, column 1 =
//! successful), the initial vector `sigma` and the binary transient
//! indicator `theta`. The mean age of information of a tagged source is
//!
//! ```text
//! E[age] = -(sigma U^-2 theta) / (sigma U^-1 theta)
//! ```
//!
//! evaluated here with two LU solves against `U`; no explicit inverse is
//! ever formed.

use nalgebra::{DMatrix, DVector};

use crate::error::{AoiError, Result};

/// Absolute tolerance for structural checks (row sums, probability mass).
pub const STRUCTURAL_TOL: f64 = 1e-12;

/// Which absorbing state a transient state drains into.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Absorption {
    /// The tagged packet became obsolete before delivery.
    Unsuccessful,
    /// The AoI cycle opened by the tagged packet has closed.
    Successful,
}

impl Absorption {
    fn column(self) -> usize {
        match self {
            Absorption::Unsuccessful => 0,
            Absorption::Successful => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AbsorbingChain {
    u: DMatrix<f64>,
    v: DMatrix<f64>,
    sigma: DVector<f64>,
    theta: DVector<f64>,
}

impl AbsorbingChain {
    /// Assemble a chain from raw parts without checking any invariant.
    ///
    /// Prefer [`ChainBuilder`], which derives the diagonal of `U`. This
    /// constructor exists so that malformed chains can be fed to
    /// [`validate_chain`].
    pub fn from_raw(
        u: DMatrix<f64>,
        v: DMatrix<f64>,
        sigma: DVector<f64>,
        theta: DVector<f64>,
    ) -> Self {
        Self { u, v, sigma, theta }
    }

    pub fn num_transient(&self) -> usize {
        self.u.nrows()
    }

    pub fn u(&self) -> &DMatrix<f64> {
        &self.u
    }

    pub fn v(&self) -> &DMatrix<f64> {
        &self.v
    }

    pub fn sigma(&self) -> &DVector<f64> {
        &self.sigma
    }

    pub fn theta(&self) -> &DVector<f64> {
        &self.theta
    }

    /// Multiply every rate by `factor` (a change of time unit).
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            u: &self.u * factor,
            v: &self.v * factor,
            sigma: self.sigma.clone(),
            theta: self.theta.clone(),
        }
    }
}

/// Incremental construction of an [`AbsorbingChain`].
///
/// Only off-diagonal rates are supplied; each diagonal entry of `U` is set
/// to minus the total outflow of its row, so `U 1 + V 1 = 0` holds by
/// construction.
#[derive(Debug, Clone)]
pub struct ChainBuilder {
    u: DMatrix<f64>,
    v: DMatrix<f64>,
    sigma: DVector<f64>,
    theta: DVector<f64>,
}

impl ChainBuilder {
    pub fn new(num_transient: usize) -> Self {
        Self {
            u: DMatrix::zeros(num_transient, num_transient),
            v: DMatrix::zeros(num_transient, 2),
            sigma: DVector::zeros(num_transient),
            theta: DVector::zeros(num_transient),
        }
    }

    /// Add `rate` to the transient transition `from -> to`. Self-loops are ignored.
    pub fn transition(&mut self, from: usize, to: usize, rate: f64) -> &mut Self {
        if from != to {
            self.u[(from, to)] += rate;
        }
        self
    }

    pub fn absorb(&mut self, from: usize, into: Absorption, rate: f64) -> &mut Self {
        self.v[(from, into.column())] += rate;
        self
    }

    pub fn initial(&mut self, state: usize, probability: f64) -> &mut Self {
        self.sigma[state] = probability;
        self
    }

    pub fn mark_cycle(&mut self, state: usize) -> &mut Self {
        self.theta[state] = 1.0;
        self
    }

    pub fn build(mut self) -> AbsorbingChain {
        for i in 0..self.u.nrows() {
            let out: f64 = self.u.row(i).sum() + self.v.row(i).sum();
            self.u[(i, i)] = -out;
        }
        AbsorbingChain {
            u: self.u,
            v: self.v,
            sigma: self.sigma,
            theta: self.theta,
        }
    }
}

/// A single violated invariant found by [`validate_chain`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    Shape(String),
    NegativeOffDiagonal { row: usize, col: usize, value: f64 },
    NonNegativeDiagonal { row: usize, value: f64 },
    NegativeAbsorption { row: usize, col: usize, value: f64 },
    RowSum { row: usize, sum: f64 },
    NegativeSigma { index: usize, value: f64 },
    SigmaMass { sum: f64 },
    NonBinaryTheta { index: usize, value: f64 },
    Singular,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_pass(&self) -> bool {
        self.violations.is_empty()
    }
}

fn structural_violations(chain: &AbsorbingChain) -> Vec<Violation> {
    let n = chain.u.nrows();
    let mut out = Vec::new();
    if chain.u.ncols() != n
        || chain.v.nrows() != n
        || chain.v.ncols() != 2
        || chain.sigma.len() != n
        || chain.theta.len() != n
    {
        out.push(Violation::Shape(format!(
            "U {}x{}, V {}x{}, sigma {}, theta {} (expected n = {n})",
            chain.u.nrows(),
            chain.u.ncols(),
            chain.v.nrows(),
            chain.v.ncols(),
            chain.sigma.len(),
            chain.theta.len()
        )));
        return out;
    }
    if n == 0 {
        out.push(Violation::Shape("chain has no transient states".into()));
        return out;
    }
    for i in 0..n {
        for j in 0..n {
            let x = chain.u[(i, j)];
            if i == j {
                if !(x < 0.0) {
                    out.push(Violation::NonNegativeDiagonal { row: i, value: x });
                }
            } else if !(x >= 0.0) {
                out.push(Violation::NegativeOffDiagonal {
                    row: i,
                    col: j,
                    value: x,
                });
            }
        }
        for j in 0..2 {
            let x = chain.v[(i, j)];
            if !(x >= 0.0) {
                out.push(Violation::NegativeAbsorption {
                    row: i,
                    col: j,
                    value: x,
                });
            }
        }
        let sum = chain.u.row(i).sum() + chain.v.row(i).sum();
        if !(sum.abs() <= STRUCTURAL_TOL) {
            out.push(Violation::RowSum { row: i, sum });
        }
        let s = chain.sigma[i];
        if !(s >= 0.0) {
            out.push(Violation::NegativeSigma { index: i, value: s });
        }
        let t = chain.theta[i];
        if t != 0.0 && t != 1.0 {
            out.push(Violation::NonBinaryTheta { index: i, value: t });
        }
    }
    let mass = chain.sigma.sum();
    if !((mass - 1.0).abs() <= STRUCTURAL_TOL) {
        out.push(Violation::SigmaMass { sum: mass });
    }
    out
}

/// Check every structural invariant of `chain` and the non-singularity of `U`.
pub fn validate_chain(chain: &AbsorbingChain) -> ValidationReport {
    let mut violations = structural_violations(chain);
    if !violations.iter().any(|v| matches!(v, Violation::Shape(_)))
        && chain.u.clone().lu().solve(&chain.theta).is_none()
    {
        violations.push(Violation::Singular);
    }
    ValidationReport { violations }
}

/// Mean age of information of an absorbing chain.
pub fn mean_aoi(chain: &AbsorbingChain) -> Result<f64> {
    let violations = structural_violations(chain);
    if !violations.is_empty() {
        return Err(AoiError::InvalidChain(format!("{violations:?}")));
    }
    if chain.theta.iter().all(|&t| t == 0.0) {
        return Err(AoiError::DegenerateTheta);
    }
    let lu = chain.u.clone().lu();
    let first = lu.solve(&chain.theta).ok_or(AoiError::SingularGenerator)?;
    let second = lu.solve(&first).ok_or(AoiError::SingularGenerator)?;
    let den = chain.sigma.dot(&first);
    let num = chain.sigma.dot(&second);
    let value = -num / den;
    if !value.is_finite() {
        return Err(AoiError::SingularGenerator);
    }
    Ok(value)
}

/// Generator of an irreducible (on its closed class) recurrent chain.
#[derive(Debug, Clone, PartialEq)]
pub struct RecurrentChain {
    generator: DMatrix<f64>,
}

impl RecurrentChain {
    /// Build from off-diagonal rates; the diagonal is derived from row sums.
    pub fn from_rates(mut rates: DMatrix<f64>) -> Result<Self> {
        let n = rates.nrows();
        if rates.ncols() != n || n == 0 {
            return Err(AoiError::InvalidChain(format!(
                "generator must be square and nonempty, got {}x{}",
                rates.nrows(),
                rates.ncols()
            )));
        }
        for i in 0..n {
            rates[(i, i)] = 0.0;
            if rates.row(i).iter().any(|&x| !(x >= 0.0)) {
                return Err(AoiError::InvalidChain(format!("negative rate in row {i}")));
            }
            let out = rates.row(i).sum();
            rates[(i, i)] = -out;
        }
        Ok(Self { generator: rates })
    }

    /// Wrap a full generator, checking signs and zero row sums.
    pub fn from_generator(generator: DMatrix<f64>) -> Result<Self> {
        let n = generator.nrows();
        if generator.ncols() != n || n == 0 {
            return Err(AoiError::InvalidChain(
                "generator must be square and nonempty".into(),
            ));
        }
        for i in 0..n {
            let sum = generator.row(i).sum();
            if !(sum.abs() <= STRUCTURAL_TOL) {
                return Err(AoiError::InvalidChain(format!("row {i} sums to {sum:e}")));
            }
            for j in 0..n {
                if i != j && !(generator[(i, j)] >= 0.0) {
                    return Err(AoiError::InvalidChain(format!(
                        "negative off-diagonal at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(Self { generator })
    }

    pub fn num_states(&self) -> usize {
        self.generator.nrows()
    }

    pub fn generator(&self) -> &DMatrix<f64> {
        &self.generator
    }
}

/// Stationary row vector `phi` with `phi G = 0` and `sum(phi) = 1`.
///
/// Solved as the bordered system `[G^T 1; 1^T 0] [phi; s] = [0; 1]`, which is
/// non-singular exactly when the null space of `G` is one-dimensional.
pub fn stationary_distribution(chain: &RecurrentChain) -> Result<DVector<f64>> {
    let g = &chain.generator;
    let n = g.nrows();
    let mut bordered = DMatrix::zeros(n + 1, n + 1);
    bordered.view_mut((0, 0), (n, n)).copy_from(&g.transpose());
    for i in 0..n {
        bordered[(i, n)] = 1.0;
        bordered[(n, i)] = 1.0;
    }
    let mut rhs = DVector::zeros(n + 1);
    rhs[n] = 1.0;

    let scale = g.iter().fold(1.0_f64, |m, x| m.max(x.abs()));
    let lu = bordered.lu();
    let min_pivot = lu
        .u()
        .diagonal()
        .iter()
        .fold(f64::INFINITY, |m, x| m.min(x.abs()));
    if !(min_pivot > 1e-13 * scale) {
        return Err(AoiError::ReducibleChain);
    }
    let solution = lu.solve(&rhs).ok_or(AoiError::ReducibleChain)?;
    let mut phi = solution.rows(0, n).into_owned();
    // Transient states carry exact zeros up to rounding.
    for x in phi.iter_mut() {
        if *x < 0.0 && *x > -1e-13 {
            *x = 0.0;
        }
    }
    if phi.iter().any(|&x| x < 0.0 || !x.is_finite()) {
        return Err(AoiError::ReducibleChain);
    }
    Ok(phi)
}
