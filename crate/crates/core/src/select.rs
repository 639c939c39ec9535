//! Model scoring and search over `(G, covariance model)` candidates.
//!
//! Candidates are scored with `BIC'(m) = 2ℓ − d log m`. Taking `m = n₁`, the
//! number of unlabeled rows, gives the semi-supervised criterion `BIC*`;
//! `m = n` gives the classical BIC.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::CovModel;
use crate::init::ss_kmeanspp;
use crate::rng::derive_seed;
use crate::ssem::{fit, Dataset, FitOptions, FitResult};

/// Free parameters: `G − 1` weights, `G·dim` means and the covariance terms.
pub fn count_params(g: usize, dim: usize, model: CovModel) -> usize {
    (g - 1) + g * dim + model.covariance_params(g, dim)
}

/// `2ℓ − d log n₁`. Needs `n₁ ≥ 2` so the penalty is positive.
pub fn bic_star(loglik: f64, d: usize, n1: usize) -> Result<f64> {
    if n1 < 2 {
        return Err(Error::UndefinedPenalty(format!(
            "BIC* needs at least 2 unlabeled observations, got {n1}"
        )));
    }
    Ok(2.0 * loglik - d as f64 * (n1 as f64).ln())
}

/// `2ℓ − d log m` for `m > 1`.
pub fn bic_prime(loglik: f64, d: usize, m: f64) -> Result<f64> {
    if !(m > 1.0) || !m.is_finite() {
        return Err(Error::Domain(format!("penalty argument m must exceed 1, got {m}")));
    }
    Ok(2.0 * loglik - d as f64 * m.ln())
}

/// Which sample size enters the `d log m` penalty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PenaltyRepr", into = "PenaltyRepr")]
pub enum Penalty {
    /// `m = n₁` (BIC*).
    Unlabeled,
    /// `m = n` (classical BIC).
    Total,
    Fixed(f64),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum PenaltyRepr {
    Named(String),
    Value(f64),
}

impl TryFrom<PenaltyRepr> for Penalty {
    type Error = Error;

    fn try_from(r: PenaltyRepr) -> Result<Self> {
        match r {
            PenaltyRepr::Named(s) => s.parse(),
            PenaltyRepr::Value(m) => Ok(Penalty::Fixed(m)),
        }
    }
}

impl From<Penalty> for PenaltyRepr {
    fn from(p: Penalty) -> Self {
        match p {
            Penalty::Unlabeled => PenaltyRepr::Named("n1".into()),
            Penalty::Total => PenaltyRepr::Named("n".into()),
            Penalty::Fixed(m) => PenaltyRepr::Value(m),
        }
    }
}

impl FromStr for Penalty {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "n1" => Ok(Penalty::Unlabeled),
            "n" => Ok(Penalty::Total),
            other => other
                .parse::<f64>()
                .map(Penalty::Fixed)
                .map_err(|_| Error::InvalidInput(format!("penalty must be n1, n or a number, got {other:?}"))),
        }
    }
}

impl fmt::Display for Penalty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Penalty::Unlabeled => f.write_str("n1"),
            Penalty::Total => f.write_str("n"),
            Penalty::Fixed(m) => write!(f, "{m}"),
        }
    }
}

impl Penalty {
    pub fn resolve(self, n: usize, n1: usize) -> Result<f64> {
        let m = match self {
            Penalty::Unlabeled => {
                if n1 < 2 {
                    return Err(Error::UndefinedPenalty(format!(
                        "BIC* is undefined with {n1} unlabeled observations (log n1 must be positive)"
                    )));
                }
                n1 as f64
            }
            Penalty::Total => n as f64,
            Penalty::Fixed(m) => m,
        };
        if !(m > 1.0) || !m.is_finite() {
            return Err(Error::Domain(format!("penalty argument m must exceed 1, got {m}")));
        }
        Ok(m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltyValue {
    pub m: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelScore {
    pub g: usize,
    pub model: CovModel,
    pub loglik: f64,
    pub d: usize,
    pub n: usize,
    pub n1: usize,
    /// `None` when `n₁ < 2`.
    pub bic_star: Option<f64>,
    /// `BIC'(m)` at `m = n₁` (when defined), `m = n` and any extra
    /// requested values.
    pub bic_prime: Vec<PenaltyValue>,
}

impl ModelScore {
    pub fn new(g: usize, model: CovModel, loglik: f64, dim: usize, n: usize, n1: usize, extra_m: &[f64]) -> Self {
        let d = count_params(g, dim, model);
        let bic_star = bic_star(loglik, d, n1).ok();
        let mut ms: Vec<f64> = Vec::new();
        if n1 >= 2 {
            ms.push(n1 as f64);
        }
        if n >= 2 {
            ms.push(n as f64);
        }
        ms.extend(extra_m.iter().copied().filter(|&m| m > 1.0));
        ms.dedup();
        let bic_prime = ms
            .into_iter()
            .map(|m| PenaltyValue {
                m,
                value: 2.0 * loglik - d as f64 * m.ln(),
            })
            .collect();
        ModelScore {
            g,
            model,
            loglik,
            d,
            n,
            n1,
            bic_star,
            bic_prime,
        }
    }

    pub fn classical_bic(&self) -> f64 {
        2.0 * self.loglik - self.d as f64 * (self.n as f64).ln()
    }

    pub fn criterion(&self, m: f64) -> f64 {
        2.0 * self.loglik - self.d as f64 * m.ln()
    }

    pub fn bic_prime_at(&self, m: f64) -> Option<f64> {
        self.bic_prime.iter().find(|p| p.m == m).map(|p| p.value)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchOptions {
    pub g_range: Vec<usize>,
    pub models: Vec<CovModel>,
    pub penalty: Penalty,
    pub restarts: usize,
    pub seed: u64,
    pub fit: FitOptions,
    /// Additional `m` values recorded in every score.
    pub extra_penalties: Vec<f64>,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions {
            g_range: (1..=9).collect(),
            models: CovModel::ALL.to_vec(),
            penalty: Penalty::Unlabeled,
            restarts: 5,
            seed: 0,
            fit: FitOptions::default(),
            extra_penalties: Vec::new(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Candidate {
    pub g: usize,
    pub model: CovModel,
    pub outcome: std::result::Result<(ModelScore, FitResult), String>,
}

impl Candidate {
    pub fn score(&self) -> Option<&ModelScore> {
        self.outcome.as_ref().ok().map(|(s, _)| s)
    }

    pub fn fit(&self) -> Option<&FitResult> {
        self.outcome.as_ref().ok().map(|(_, f)| f)
    }

    pub fn record(&self) -> CandidateRecord {
        match &self.outcome {
            Ok((score, fit)) => CandidateRecord {
                g: self.g,
                model: self.model,
                failed: false,
                error: None,
                converged: Some(fit.converged),
                iterations: Some(fit.iterations),
                score: Some(score.clone()),
            },
            Err(e) => CandidateRecord {
                g: self.g,
                model: self.model,
                failed: true,
                error: Some(e.clone()),
                converged: None,
                iterations: None,
                score: None,
            },
        }
    }
}

/// Serializable summary of one candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub g: usize,
    pub model: CovModel,
    pub failed: bool,
    pub error: Option<String>,
    pub converged: Option<bool>,
    pub iterations: Option<usize>,
    pub score: Option<ModelScore>,
}

#[derive(Debug, Clone)]
pub struct SearchOutcome {
    pub candidates: Vec<Candidate>,
    /// Penalty argument used to pick `best`.
    pub m: f64,
    pub best: usize,
}

impl SearchOutcome {
    pub fn best_score(&self) -> &ModelScore {
        self.candidates[self.best].score().expect("best candidate succeeded")
    }

    pub fn best_fit(&self) -> &FitResult {
        self.candidates[self.best].fit().expect("best candidate succeeded")
    }

    pub fn scores(&self) -> Vec<&ModelScore> {
        self.candidates.iter().filter_map(|c| c.score()).collect()
    }

    pub fn records(&self) -> Vec<CandidateRecord> {
        self.candidates.iter().map(Candidate::record).collect()
    }

    /// Index of the candidate maximizing `BIC'(m)`. The fits do not depend
    /// on `m`, so any penalty can be applied after the search.
    pub fn select_with(&self, m: f64) -> Option<usize> {
        select_best(&self.candidates, m)
    }
}

fn tie_key(s: &ModelScore) -> (usize, usize, CovModel) {
    (s.d, s.g, s.model)
}

/// Argmax of `BIC'(m)`; ties go to smaller `d`, then smaller `G`, then the
/// model order `EII < VII < EEE < VVV`.
pub fn select_best(candidates: &[Candidate], m: f64) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, c) in candidates.iter().enumerate() {
        let Some(score) = c.score() else { continue };
        let value = score.criterion(m);
        if !value.is_finite() {
            continue;
        }
        best = match best {
            None => Some((i, value)),
            Some((j, bv)) => {
                let other = candidates[j].score().unwrap();
                if value > bv || (value == bv && tie_key(score) < tie_key(other)) {
                    Some((i, value))
                } else {
                    Some((j, bv))
                }
            }
        };
    }
    best.map(|(i, _)| i)
}

fn model_index(model: CovModel) -> u64 {
    CovModel::ALL.iter().position(|&m| m == model).unwrap() as u64
}

/// Best-of-`restarts` fit for one candidate. Restart `r` is seeded from
/// `(seed, G, model, r)`.
pub fn fit_candidate(
    data: &Dataset,
    g: usize,
    model: CovModel,
    restarts: usize,
    seed: u64,
    opts: &FitOptions,
) -> Result<FitResult> {
    let mut best: Option<FitResult> = None;
    let mut last_err = None;
    for r in 0..restarts.max(1) {
        let s = derive_seed(seed, &[g as u64, model_index(model), r as u64]);
        let attempt = ss_kmeanspp(data, g, model, s).and_then(|init| fit(data, &init, opts));
        match attempt {
            Ok(f) => {
                if best.as_ref().is_none_or(|b| f.loglik > b.loglik) {
                    best = Some(f);
                }
            }
            Err(e) if e.is_candidate_failure() => last_err = Some(e),
            Err(e) => return Err(e),
        }
    }
    best.ok_or_else(|| last_err.expect("at least one restart ran"))
}

/// Fits every `(G, model)` pair and returns all candidates together with the
/// one maximizing the chosen criterion. Candidate fits run on the current
/// rayon pool; results do not depend on scheduling.
pub fn model_search(data: &Dataset, opts: &SearchOptions) -> Result<SearchOutcome> {
    if opts.g_range.is_empty() || opts.models.is_empty() {
        return Err(Error::InvalidInput("empty G range or model set".into()));
    }
    for &g in &opts.g_range {
        data.check_components(g)?;
    }
    let (n, n1) = (data.n(), data.n_unlabeled());
    let m = opts.penalty.resolve(n, n1)?;

    let pairs: Vec<(usize, CovModel)> = opts
        .g_range
        .iter()
        .flat_map(|&g| opts.models.iter().map(move |&model| (g, model)))
        .collect();
    let results: Vec<Result<Candidate>> = pairs
        .par_iter()
        .map(|&(g, model)| {
            let outcome = match fit_candidate(data, g, model, opts.restarts, opts.seed, &opts.fit) {
                Ok(f) => {
                    let score = ModelScore::new(g, model, f.loglik, data.dim(), n, n1, &opts.extra_penalties);
                    Ok((score, f))
                }
                Err(e) if e.is_candidate_failure() => Err(e.to_string()),
                Err(e) => return Err(e),
            };
            Ok(Candidate { g, model, outcome })
        })
        .collect();
    let candidates = results.into_iter().collect::<Result<Vec<_>>>()?;

    let best = select_best(&candidates, m).ok_or(Error::NoViableModel {
        attempted: candidates.len(),
    })?;
    Ok(SearchOutcome { candidates, m, best })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubsetScore {
    pub columns: Vec<usize>,
    pub best: ModelScore,
}

/// Runs `model_search` on each caller-supplied column subset and reports the
/// winning score per subset.
pub fn score_column_subsets(data: &Dataset, subsets: &[Vec<usize>], opts: &SearchOptions) -> Result<Vec<SubsetScore>> {
    subsets
        .iter()
        .map(|cols| {
            let sub = data.select_columns(cols)?;
            let outcome = model_search(&sub, opts)?;
            Ok(SubsetScore {
                columns: cols.clone(),
                best: outcome.best_score().clone(),
            })
        })
        .collect()
}
