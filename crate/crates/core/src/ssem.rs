//! Semi-supervised EM for Gaussian mixtures.
//!
//! Observations fall into an unlabeled group, drawn from the full mixture,
//! and zero or more labeled classes, each drawn from a single known
//! component. Labeled rows therefore contribute `log φ(x; μ_j, Σ_j)` to the
//! likelihood with no mixing weight, and the mixing weights are estimated
//! from the unlabeled rows alone.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{mstep_covariances, CovModel, FactorizedComponent, GaussianComponent, MIN_COMPONENT_WEIGHT};

/// Observation matrix plus a partial labeling.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: DMatrix<f64>,
    labels: Vec<Option<usize>>,
    class_to_component: Vec<usize>,
}

impl Dataset {
    /// Dataset with no labels.
    pub fn unlabeled(x: DMatrix<f64>) -> Result<Self> {
        let n = x.nrows();
        Self::with_class_map(x, vec![None; n], Vec::new())
    }

    /// Labeled class `c` is mapped to component `c`.
    pub fn new(x: DMatrix<f64>, labels: Vec<Option<usize>>) -> Result<Self> {
        let classes = labels.iter().flatten().map(|&c| c + 1).max().unwrap_or(0);
        Self::with_class_map(x, labels, (0..classes).collect())
    }

    /// `class_to_component[c]` is the component that generated class `c`.
    pub fn with_class_map(
        x: DMatrix<f64>,
        labels: Vec<Option<usize>>,
        class_to_component: Vec<usize>,
    ) -> Result<Self> {
        if x.nrows() == 0 || x.ncols() == 0 {
            return Err(Error::InsufficientData("dataset needs at least one row and one column".into()));
        }
        if labels.len() != x.nrows() {
            return Err(Error::Dimension(format!(
                "{} labels for {} rows",
                labels.len(),
                x.nrows()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("observations must be finite".into()));
        }
        let classes = class_to_component.len();
        if let Some(&c) = labels.iter().flatten().find(|&&c| c >= classes) {
            return Err(Error::InvalidInput(format!(
                "label {c} has no component mapping ({classes} classes mapped)"
            )));
        }
        let mut seen = class_to_component.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != classes {
            return Err(Error::InvalidInput("class-to-component map must be injective".into()));
        }
        Ok(Dataset {
            x,
            labels,
            class_to_component,
        })
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn labels(&self) -> &[Option<usize>] {
        &self.labels
    }

    pub fn class_to_component(&self) -> &[usize] {
        &self.class_to_component
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    /// Number of unlabeled rows (`n₁`).
    pub fn n_unlabeled(&self) -> usize {
        self.labels.iter().filter(|l| l.is_none()).count()
    }

    /// Number of labeled classes (`C − 1`).
    pub fn n_classes(&self) -> usize {
        self.class_to_component.len()
    }

    /// Fixed component of row `i`, if labeled.
    pub fn fixed_component(&self, i: usize) -> Option<usize> {
        self.labels[i].map(|c| self.class_to_component[c])
    }

    /// Checks that a mixture with `g` components can host every labeled
    /// class.
    pub fn check_components(&self, g: usize) -> Result<()> {
        if g == 0 {
            return Err(Error::InvalidInput("G must be at least 1".into()));
        }
        if g < self.n_classes() {
            return Err(Error::InvalidInput(format!(
                "G = {g} is smaller than the {} labeled classes",
                self.n_classes()
            )));
        }
        if let Some(&j) = self.class_to_component.iter().find(|&&j| j >= g) {
            return Err(Error::InvalidInput(format!(
                "a labeled class maps to component {j}, outside 0..{g}"
            )));
        }
        Ok(())
    }

    /// Same rows and labels restricted to the given feature columns.
    pub fn select_columns(&self, columns: &[usize]) -> Result<Dataset> {
        if columns.is_empty() || columns.iter().any(|&c| c >= self.dim()) {
            return Err(Error::InvalidInput(format!(
                "column subset {columns:?} is empty or out of range for dimension {}",
                self.dim()
            )));
        }
        let x = self.x.select_columns(columns);
        Dataset::with_class_map(x, self.labels.clone(), self.class_to_component.clone())
    }
}

/// Mixing weights, components and the covariance structure they obey.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmParams {
    pub weights: Vec<f64>,
    pub components: Vec<GaussianComponent>,
    pub model: CovModel,
}

impl GmmParams {
    pub fn g(&self) -> usize {
        self.components.len()
    }

    pub fn dim(&self) -> usize {
        self.components.first().map_or(0, |c| c.dim())
    }

    pub fn validate(&self) -> Result<()> {
        if self.components.is_empty() || self.weights.len() != self.components.len() {
            return Err(Error::Dimension(format!(
                "{} weights for {} components",
                self.weights.len(),
                self.components.len()
            )));
        }
        if self.weights.iter().any(|&w| !(w >= 0.0)) {
            return Err(Error::InvalidInput("mixing weights must be non-negative".into()));
        }
        let total: f64 = self.weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidInput(format!("mixing weights sum to {total}")));
        }
        let dim = self.dim();
        if self.components.iter().any(|c| c.dim() != dim) {
            return Err(Error::Dimension("components have differing dimensions".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitOptions {
    pub max_iter: usize,
    pub rel_tol: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            max_iter: 500,
            rel_tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub params: GmmParams,
    pub resp: DMatrix<f64>,
    pub loglik: f64,
    /// Log-likelihood after every E-step, starting from the initial
    /// parameters.
    pub loglik_trace: Vec<f64>,
    /// Number of M-steps performed.
    pub iterations: usize,
    pub converged: bool,
    /// Set when there were no unlabeled rows and the weights were fixed to
    /// the labeled-class proportions.
    pub weights_from_labels: bool,
}

fn factorize_all(params: &GmmParams) -> Result<Vec<FactorizedComponent>> {
    params
        .components
        .iter()
        .enumerate()
        .map(|(k, c)| c.factorize(k))
        .collect()
}

/// Responsibilities and observed-data log-likelihood under `params`.
pub fn e_step(data: &Dataset, params: &GmmParams) -> Result<(DMatrix<f64>, f64)> {
    params.validate()?;
    if params.dim() != data.dim() {
        return Err(Error::Dimension(format!(
            "parameters have dimension {} but data has {}",
            params.dim(),
            data.dim()
        )));
    }
    let g = params.g();
    data.check_components(g)?;
    let factors = factorize_all(params)?;
    let log_weights: Vec<f64> = params.weights.iter().map(|w| w.ln()).collect();

    let n = data.n();
    let mut resp = DMatrix::zeros(n, g);
    let mut scratch = vec![0.0; data.dim()];
    let mut log_terms = vec![0.0; g];
    let mut loglik = 0.0;
    for i in 0..n {
        if let Some(j) = data.fixed_component(i) {
            let lp = factors[j].log_density_row(data.x(), i, &mut scratch);
            if !lp.is_finite() {
                return Err(Error::Underflow { row: i });
            }
            resp[(i, j)] = 1.0;
            loglik += lp;
            continue;
        }
        let mut max = f64::NEG_INFINITY;
        for k in 0..g {
            let lp = if log_weights[k] == f64::NEG_INFINITY {
                f64::NEG_INFINITY
            } else {
                log_weights[k] + factors[k].log_density_row(data.x(), i, &mut scratch)
            };
            log_terms[k] = lp;
            if lp > max {
                max = lp;
            }
        }
        if !max.is_finite() {
            return Err(Error::Underflow { row: i });
        }
        let sum: f64 = log_terms.iter().map(|lp| (lp - max).exp()).sum();
        let lse = max + sum.ln();
        for k in 0..g {
            resp[(i, k)] = (log_terms[k] - lse).exp();
        }
        loglik += lse;
    }
    Ok((resp, loglik))
}

/// Weighted maximum-likelihood update. Means and covariances use every row;
/// mixing weights use the unlabeled rows only.
pub fn m_step(data: &Dataset, resp: &DMatrix<f64>, model: CovModel) -> Result<GmmParams> {
    m_step_flagged(data, resp, model).map(|(p, _)| p)
}

fn m_step_flagged(data: &Dataset, resp: &DMatrix<f64>, model: CovModel) -> Result<(GmmParams, bool)> {
    let (n, dim) = (data.n(), data.dim());
    let g = resp.ncols();
    if resp.nrows() != n {
        return Err(Error::Dimension(format!(
            "responsibilities have {} rows but data has {n}",
            resp.nrows()
        )));
    }
    data.check_components(g)?;

    let mut means = Vec::with_capacity(g);
    for k in 0..g {
        let w = resp.column(k);
        let count = w.sum();
        if count < MIN_COMPONENT_WEIGHT {
            return Err(Error::EmptyComponent { component: k, count });
        }
        let mut mean = DVector::zeros(dim);
        for i in 0..n {
            let r = w[i];
            if r != 0.0 {
                for j in 0..dim {
                    mean[j] += r * data.x()[(i, j)];
                }
            }
        }
        means.push(mean / count);
    }
    let covariances = mstep_covariances(data.x(), resp, &means, model)?;

    let n1 = data.n_unlabeled();
    let (weights, from_labels) = if n1 > 0 {
        let mut w = vec![0.0; g];
        for i in (0..n).filter(|&i| data.labels()[i].is_none()) {
            for (k, wk) in w.iter_mut().enumerate() {
                *wk += resp[(i, k)];
            }
        }
        let total: f64 = w.iter().sum();
        (w.into_iter().map(|v| v / total).collect::<Vec<_>>(), false)
    } else {
        if g > data.n_classes() {
            return Err(Error::InsufficientData(
                "no unlabeled rows to estimate weights of unlabeled components".into(),
            ));
        }
        let mut w = vec![0.0; g];
        for i in 0..n {
            if let Some(j) = data.fixed_component(i) {
                w[j] += 1.0;
            }
        }
        (w.into_iter().map(|v| v / n as f64).collect(), true)
    };

    let components = means
        .into_iter()
        .zip(covariances)
        .map(|(mean, covariance)| GaussianComponent { mean, covariance })
        .collect();
    Ok((
        GmmParams {
            weights,
            components,
            model,
        },
        from_labels,
    ))
}

/// Runs EM from `init` until the relative log-likelihood change
/// `|Δℓ| / (1 + |ℓ|)` drops below `rel_tol` or `max_iter` M-steps have run.
/// The number of components and the covariance model come from `init`.
pub fn fit(data: &Dataset, init: &GmmParams, opts: &FitOptions) -> Result<FitResult> {
    init.validate()?;
    let model = init.model;
    let (mut resp, mut loglik) = e_step(data, init)?;
    let mut params = init.clone();
    let mut trace = vec![loglik];
    let mut iterations = 0;
    let mut converged = false;
    let mut from_labels = false;

    while iterations < opts.max_iter {
        let (next, flagged) = m_step_flagged(data, &resp, model)?;
        let (next_resp, next_loglik) = e_step(data, &next)?;
        iterations += 1;
        trace.push(next_loglik);
        let change = (next_loglik - loglik).abs() / (1.0 + next_loglik.abs());
        params = next;
        resp = next_resp;
        loglik = next_loglik;
        from_labels = flagged;
        if change < opts.rel_tol {
            converged = true;
            break;
        }
    }

    Ok(FitResult {
        params,
        resp,
        loglik,
        loglik_trace: trace,
        iterations,
        converged,
        weights_from_labels: from_labels,
    })
}

/// Row-wise argmax of the responsibilities; ties go to the lowest index.
pub fn map_labels(resp: &DMatrix<f64>) -> Vec<usize> {
    (0..resp.nrows())
        .map(|i| {
            let row = resp.row(i);
            let mut best = 0;
            for k in 1..row.len() {
                if row[k] > row[best] {
                    best = k;
                }
            }
            best
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn sphere(mean: &[f64], var: f64) -> GaussianComponent {
        let d = mean.len();
        GaussianComponent::new(DVector::from_row_slice(mean), DMatrix::identity(d, d) * var).unwrap()
    }

    fn two_component(weights: [f64; 2], model: CovModel) -> GmmParams {
        GmmParams {
            weights: weights.to_vec(),
            components: vec![sphere(&[-1.0, 0.0], 1.0), sphere(&[1.0, 0.0], 1.0)],
            model,
        }
    }

    #[test]
    fn dataset_validation() {
        let x = DMatrix::from_row_slice(3, 1, &[0.0, 1.0, 2.0]);
        assert!(Dataset::new(x.clone(), vec![None, Some(0)]).is_err());
        assert!(Dataset::with_class_map(x.clone(), vec![None, Some(0), Some(1)], vec![2, 2]).is_err());
        assert!(Dataset::with_class_map(x.clone(), vec![None, Some(1), None], vec![0]).is_err());
        let d = Dataset::with_class_map(x, vec![None, Some(1), Some(0)], vec![2, 0]).unwrap();
        assert_eq!(d.n_unlabeled(), 1);
        assert_eq!(d.n_classes(), 2);
        assert_eq!(d.fixed_component(1), Some(0));
        assert!(d.check_components(2).is_err());
        assert!(d.check_components(3).is_ok());
    }

    #[test]
    fn equidistant_point_splits_evenly() {
        let data = Dataset::unlabeled(DMatrix::from_row_slice(1, 2, &[0.0, 3.0])).unwrap();
        let (resp, _) = e_step(&data, &two_component([0.5, 0.5], CovModel::EII)).unwrap();
        assert_abs_diff_eq!(resp[(0, 0)], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(resp[(0, 1)], 0.5, epsilon = 1e-15);
        assert_eq!(map_labels(&resp), vec![0]);
    }

    #[test]
    fn labeled_rows_are_one_hot_and_skip_weights() {
        let x = DMatrix::from_row_slice(2, 2, &[-5.0, 0.0, 0.2, 0.1]);
        let data = Dataset::with_class_map(x, vec![Some(0), None], vec![1]).unwrap();
        let params = two_component([0.9, 0.1], CovModel::EII);
        let (resp, ll) = e_step(&data, &params).unwrap();
        assert_eq!(resp.row(0).iter().cloned().collect::<Vec<_>>(), vec![0.0, 1.0]);
        assert_eq!(map_labels(&resp)[0], 1);

        let lab = params.components[1].factorize(1).unwrap().log_density(&[-5.0, 0.0]);
        let f0 = params.components[0].factorize(0).unwrap().log_density(&[0.2, 0.1]);
        let f1 = params.components[1].factorize(1).unwrap().log_density(&[0.2, 0.1]);
        let unl = (0.9 * f0.exp() + 0.1 * f1.exp()).ln();
        assert_abs_diff_eq!(ll, lab + unl, epsilon = 1e-12);
    }

    #[test]
    fn single_component_loglik_is_plain_sum() {
        let x = DMatrix::from_row_slice(3, 2, &[0.0, 0.0, 1.0, 2.0, -1.0, 0.5]);
        let data = Dataset::unlabeled(x.clone()).unwrap();
        let params = GmmParams {
            weights: vec![1.0],
            components: vec![sphere(&[0.5, 0.5], 2.0)],
            model: CovModel::EII,
        };
        let (resp, ll) = e_step(&data, &params).unwrap();
        assert!(resp.iter().all(|&r| r == 1.0));
        let f = params.components[0].factorize(0).unwrap();
        let expected: f64 = (0..3).map(|i| f.log_density(&[x[(i, 0)], x[(i, 1)]])).sum();
        assert_abs_diff_eq!(ll, expected, epsilon = 1e-12);
    }

    #[test]
    fn underflow_names_the_row() {
        let x = DMatrix::from_row_slice(2, 1, &[0.0, 1e200]);
        let data = Dataset::unlabeled(x).unwrap();
        let params = GmmParams {
            weights: vec![1.0],
            components: vec![sphere(&[0.0], 1.0)],
            model: CovModel::EII,
        };
        assert!(matches!(e_step(&data, &params), Err(Error::Underflow { row: 1 })));
    }

    #[test]
    fn mirrored_data_gives_even_weights() {
        let x = DMatrix::from_row_slice(4, 1, &[-3.0, -2.0, 2.0, 3.0]);
        let data = Dataset::unlabeled(x).unwrap();
        let resp = DMatrix::from_row_slice(4, 2, &[0.9, 0.1, 0.8, 0.2, 0.2, 0.8, 0.1, 0.9]);
        let p = m_step(&data, &resp, CovModel::VII).unwrap();
        assert_abs_diff_eq!(p.weights[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(p.weights[1], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(p.components[0].mean[0], -p.components[1].mean[0], epsilon = 1e-14);
    }

    #[test]
    fn weights_come_from_unlabeled_rows_only() {
        let x = DMatrix::from_row_slice(6, 1, &[-2.0, -2.1, -1.9, 2.0, 2.4, -2.05]);
        let data = Dataset::new(x, vec![Some(0), Some(0), Some(0), None, None, None]).unwrap();
        let resp = DMatrix::from_row_slice(6, 2, &[1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 1.0, 1.0, 0.0]);
        let p = m_step(&data, &resp, CovModel::VII).unwrap();
        assert_eq!(p.weights, vec![1.0 / 3.0, 2.0 / 3.0]);
    }

    #[test]
    fn all_labeled_uses_class_proportions() {
        let x = DMatrix::from_row_slice(4, 1, &[0.0, 0.5, 5.0, 5.5]);
        let data = Dataset::new(x, vec![Some(0), Some(0), Some(1), Some(0)]).unwrap();
        let resp = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 1.0, 0.0, 0.0, 1.0, 1.0, 0.0]);
        let p = m_step(&data, &resp, CovModel::EII).unwrap();
        assert_eq!(p.weights, vec![0.75, 0.25]);

        let wide = DMatrix::from_row_slice(4, 3, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 1.0, 0.0, 0.0]);
        assert!(m_step(&data, &wide, CovModel::EII).is_err());
    }

    #[test]
    fn fully_labeled_fit_reaches_class_mles_immediately() {
        let x = DMatrix::from_row_slice(6, 1, &[0.0, 1.0, 2.0, 10.0, 12.0, 14.0]);
        let data = Dataset::new(x, vec![Some(0), Some(0), Some(0), Some(1), Some(1), Some(1)]).unwrap();
        let init = GmmParams {
            weights: vec![0.5, 0.5],
            components: vec![sphere(&[3.0], 5.0), sphere(&[4.0], 1.0)],
            model: CovModel::VVV,
        };
        let res = fit(&data, &init, &FitOptions::default()).unwrap();
        assert!(res.converged);
        assert!(res.weights_from_labels);
        assert!(res.iterations <= 2);
        assert_abs_diff_eq!(res.params.components[0].mean[0], 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(res.params.components[1].mean[0], 12.0, epsilon = 1e-14);
        assert_abs_diff_eq!(res.params.components[0].covariance[(0, 0)], 2.0 / 3.0, epsilon = 1e-14);
        assert_abs_diff_eq!(res.params.components[1].covariance[(0, 0)], 8.0 / 3.0, epsilon = 1e-14);
    }

    #[test]
    fn single_component_fit_gives_sample_moments() {
        let x = DMatrix::from_row_slice(4, 2, &[0.0, 1.0, 2.0, 2.0, 4.0, -1.0, 1.0, 0.0]);
        let data = Dataset::unlabeled(x.clone()).unwrap();
        let init = GmmParams {
            weights: vec![1.0],
            components: vec![sphere(&[0.0, 0.0], 1.0)],
            model: CovModel::VVV,
        };
        let res = fit(&data, &init, &FitOptions { max_iter: 1, rel_tol: 1e-8 }).unwrap();
        let mean = x.row_mean().transpose();
        assert_abs_diff_eq!(res.params.components[0].mean, mean, epsilon = 1e-14);
        let mut cov = DMatrix::zeros(2, 2);
        for i in 0..4 {
            let d = x.row(i).transpose() - &mean;
            cov += &d * d.transpose();
        }
        assert_abs_diff_eq!(res.params.components[0].covariance, cov / 4.0, epsilon = 1e-14);
    }

    #[test]
    fn map_labels_tie_break_and_one_hot() {
        let r = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 0.5, 0.5, 0.0, 0.2, 0.4, 0.4]);
        assert_eq!(map_labels(&r), vec![1, 0, 1]);
    }

    #[test]
    fn select_columns_keeps_labels() {
        let x = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let d = Dataset::new(x, vec![Some(0), None]).unwrap();
        let s = d.select_columns(&[2, 0]).unwrap();
        assert_eq!(s.x(), &DMatrix::from_row_slice(2, 2, &[3.0, 1.0, 6.0, 4.0]));
        assert_eq!(s.labels(), d.labels());
        assert!(d.select_columns(&[3]).is_err());
    }
}
