//! Multivariate Gaussian log-densities and the constrained covariance
//! estimators used in the M-step.
//!
//! Four covariance structures are supported, named after the usual
//! volume/shape/orientation codes:
//!
//! | model | structure                         |
//! |-------|-----------------------------------|
//! | `EII` | `Σ_k = λ I`, one shared `λ`       |
//! | `VII` | `Σ_k = λ_k I`                     |
//! | `EEE` | `Σ_k = Σ`, one shared full matrix |
//! | `VVV` | unconstrained `Σ_k`               |

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Relative ridge applied to a covariance whose smallest eigenvalue is not
/// strictly positive.
pub const RIDGE_FACTOR: f64 = 1e-10;

/// Effective counts below this are treated as an empty component.
pub const MIN_COMPONENT_WEIGHT: f64 = 1e-8;

const SYMMETRY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CovModel {
    EII,
    VII,
    EEE,
    VVV,
}

impl CovModel {
    /// All models, in tie-break order.
    pub const ALL: [CovModel; 4] = [CovModel::EII, CovModel::VII, CovModel::EEE, CovModel::VVV];

    pub fn as_str(self) -> &'static str {
        match self {
            CovModel::EII => "EII",
            CovModel::VII => "VII",
            CovModel::EEE => "EEE",
            CovModel::VVV => "VVV",
        }
    }

    /// Whether every component shares one covariance matrix.
    pub fn is_shared(self) -> bool {
        matches!(self, CovModel::EII | CovModel::EEE)
    }

    /// Number of free covariance parameters for `g` components in `dim`
    /// dimensions.
    pub fn covariance_params(self, g: usize, dim: usize) -> usize {
        let full = dim * (dim + 1) / 2;
        match self {
            CovModel::EII => 1,
            CovModel::VII => g,
            CovModel::EEE => full,
            CovModel::VVV => g * full,
        }
    }
}

impl fmt::Display for CovModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CovModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "EII" => Ok(CovModel::EII),
            "VII" => Ok(CovModel::VII),
            "EEE" => Ok(CovModel::EEE),
            "VVV" => Ok(CovModel::VVV),
            other => Err(Error::InvalidInput(format!(
                "unknown covariance model {other:?} (expected EII, VII, EEE or VVV)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianComponent {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
}

impl GaussianComponent {
    pub fn new(mean: DVector<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        let dim = mean.len();
        if covariance.nrows() != dim || covariance.ncols() != dim {
            return Err(Error::Dimension(format!(
                "mean has dimension {dim} but covariance is {}x{}",
                covariance.nrows(),
                covariance.ncols()
            )));
        }
        if !is_symmetric(&covariance) {
            return Err(Error::InvalidInput("covariance is not symmetric".into()));
        }
        Ok(GaussianComponent { mean, covariance })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Cholesky-factors the covariance. `index` names the component in the
    /// error if the matrix is not positive definite.
    pub fn factorize(&self, index: usize) -> Result<FactorizedComponent> {
        let chol = self
            .covariance
            .clone()
            .cholesky()
            .ok_or(Error::SingularModel { component: index })?;
        let lower = chol.unpack();
        let log_det: f64 = 2.0 * lower.diagonal().iter().map(|v| v.ln()).sum::<f64>();
        if !log_det.is_finite() {
            return Err(Error::SingularModel { component: index });
        }
        let log_norm = -0.5 * (self.dim() as f64 * LN_2PI + log_det);
        Ok(FactorizedComponent {
            mean: self.mean.clone(),
            lower,
            log_norm,
        })
    }
}

/// A component with its covariance factored once, for repeated evaluation.
#[derive(Debug, Clone)]
pub struct FactorizedComponent {
    mean: DVector<f64>,
    lower: DMatrix<f64>,
    log_norm: f64,
}

impl FactorizedComponent {
    /// `log φ(x)` where `x` is row `row` of `data`. `scratch` must have
    /// length `dim`.
    pub fn log_density_row(&self, data: &DMatrix<f64>, row: usize, scratch: &mut [f64]) -> f64 {
        let dim = self.mean.len();
        for j in 0..dim {
            scratch[j] = data[(row, j)] - self.mean[j];
        }
        self.log_density_centered(scratch)
    }

    pub fn log_density(&self, x: &[f64]) -> f64 {
        let mut diff: Vec<f64> = x.iter().zip(self.mean.iter()).map(|(a, b)| a - b).collect();
        self.log_density_centered(&mut diff)
    }

    // Forward substitution L z = (x - μ) in place; returns log φ.
    fn log_density_centered(&self, diff: &mut [f64]) -> f64 {
        let dim = diff.len();
        let mut quad = 0.0;
        for i in 0..dim {
            let mut acc = diff[i];
            for k in 0..i {
                acc -= self.lower[(i, k)] * diff[k];
            }
            let z = acc / self.lower[(i, i)];
            diff[i] = z;
            quad += z * z;
        }
        self.log_norm - 0.5 * quad
    }
}

/// `log φ(x; μ, Σ)` through a Cholesky factorization.
pub fn log_density(x: &[f64], comp: &GaussianComponent) -> Result<f64> {
    if x.len() != comp.dim() {
        return Err(Error::Dimension(format!(
            "point has dimension {} but component has dimension {}",
            x.len(),
            comp.dim()
        )));
    }
    Ok(comp.factorize(0)?.log_density(x))
}

pub(crate) fn is_symmetric(m: &DMatrix<f64>) -> bool {
    let n = m.nrows();
    (0..n).all(|i| (0..i).all(|j| (m[(i, j)] - m[(j, i)]).abs() <= SYMMETRY_TOL))
}

/// Responsibility-weighted scatter `Σ_i r_ik (x_i − μ_k)(x_i − μ_k)ᵀ`.
pub(crate) fn weighted_scatter(
    data: &DMatrix<f64>,
    weights: impl Iterator<Item = f64>,
    mean: &DVector<f64>,
) -> DMatrix<f64> {
    let dim = data.ncols();
    let mut scatter = DMatrix::zeros(dim, dim);
    let mut diff = vec![0.0; dim];
    for (i, w) in weights.enumerate() {
        if w == 0.0 {
            continue;
        }
        for j in 0..dim {
            diff[j] = data[(i, j)] - mean[j];
        }
        for a in 0..dim {
            let wa = w * diff[a];
            for b in 0..=a {
                scatter[(a, b)] += wa * diff[b];
            }
        }
    }
    for a in 0..dim {
        for b in 0..a {
            scatter[(b, a)] = scatter[(a, b)];
        }
    }
    scatter
}

/// Adds `ε I`, `ε = RIDGE_FACTOR × mean diagonal`, when the smallest
/// eigenvalue is not positive, then checks positive definiteness.
pub fn regularize(mut cov: DMatrix<f64>, component: usize) -> Result<DMatrix<f64>> {
    if cov.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularModel { component });
    }
    let min_eig = SymmetricEigen::new(cov.clone())
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    if min_eig <= 0.0 {
        let dim = cov.nrows();
        let eps = RIDGE_FACTOR * cov.trace() / dim as f64;
        for j in 0..dim {
            cov[(j, j)] += eps;
        }
    }
    if cov.clone().cholesky().is_none() {
        return Err(Error::SingularModel { component });
    }
    Ok(cov)
}

/// Fewest effective points that determine a per-component covariance. Below
/// this the component has collapsed onto a subspace and its likelihood is
/// unbounded, which the ridge alone does not prevent.
fn min_support(model: CovModel, dim: usize) -> f64 {
    match model {
        CovModel::VII => 2.0,
        CovModel::VVV => dim as f64 + 1.0,
        CovModel::EII | CovModel::EEE => 0.0,
    }
}

/// Constrained maximum-likelihood covariances given responsibilities and
/// means. Returns one matrix per component; shared models return `G`
/// identical copies.
pub fn mstep_covariances(
    data: &DMatrix<f64>,
    resp: &DMatrix<f64>,
    means: &[DVector<f64>],
    model: CovModel,
) -> Result<Vec<DMatrix<f64>>> {
    let raw = raw_covariances(data, resp, means, model)?;
    let support = min_support(model, data.ncols());
    for k in 0..resp.ncols() {
        if resp.column(k).sum() < support {
            return Err(Error::SingularModel { component: k });
        }
    }
    if model.is_shared() {
        let shared = regularize(raw[0].clone(), 0)?;
        return Ok(vec![shared; raw.len()]);
    }
    raw.into_iter()
        .enumerate()
        .map(|(k, c)| regularize(c, k))
        .collect()
}

/// The closed-form estimates before any ridge or definiteness check.
pub(crate) fn raw_covariances(
    data: &DMatrix<f64>,
    resp: &DMatrix<f64>,
    means: &[DVector<f64>],
    model: CovModel,
) -> Result<Vec<DMatrix<f64>>> {
    let (n, dim) = data.shape();
    let g = resp.ncols();
    if resp.nrows() != n {
        return Err(Error::Dimension(format!(
            "responsibilities have {} rows but data has {n}",
            resp.nrows()
        )));
    }
    if means.len() != g || means.iter().any(|m| m.len() != dim) {
        return Err(Error::Dimension(
            "means must be G vectors of the data dimension".into(),
        ));
    }
    for i in 0..n {
        let s: f64 = resp.row(i).sum();
        if (s - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidInput(format!(
                "responsibility row {i} sums to {s}"
            )));
        }
    }

    let counts: Vec<f64> = (0..g).map(|k| resp.column(k).sum()).collect();
    for (k, &c) in counts.iter().enumerate() {
        if c < MIN_COMPONENT_WEIGHT {
            return Err(Error::EmptyComponent {
                component: k,
                count: c,
            });
        }
    }
    let scatters: Vec<DMatrix<f64>> = (0..g)
        .map(|k| weighted_scatter(data, resp.column(k).iter().cloned(), &means[k]))
        .collect();
    let total: f64 = counts.iter().sum();
    let d = dim as f64;
    let identity = DMatrix::<f64>::identity(dim, dim);

    Ok(match model {
        CovModel::VVV => scatters.iter().zip(&counts).map(|(w, &c)| w / c).collect(),
        CovModel::EEE => {
            let pooled = scatters.iter().fold(DMatrix::zeros(dim, dim), |acc, w| acc + w) / total;
            vec![pooled; g]
        }
        CovModel::VII => scatters
            .iter()
            .zip(&counts)
            .map(|(w, &c)| &identity * (w.trace() / (c * d)))
            .collect(),
        CovModel::EII => {
            let trace: f64 = scatters.iter().map(|w| w.trace()).sum();
            vec![&identity * (trace / (total * d)); g]
        }
    })
}
