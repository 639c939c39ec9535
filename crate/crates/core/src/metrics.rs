//! Partition agreement and the line-difference permutation test.

use std::collections::{BTreeMap, HashMap};

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::stream;

fn pairs(k: u64) -> f64 {
    (k * k.saturating_sub(1) / 2) as f64
}

/// Hubert–Arabie adjusted Rand index between two labelings of the same
/// items. Identical partitions give 1 even when the expected index equals
/// the maximum (all singletons, or a single block).
pub fn ari(labels_a: &[usize], labels_b: &[usize]) -> Result<f64> {
    if labels_a.len() != labels_b.len() {
        return Err(Error::Dimension(format!(
            "labelings have lengths {} and {}",
            labels_a.len(),
            labels_b.len()
        )));
    }
    let n = labels_a.len();
    if n < 2 {
        return Err(Error::InsufficientData("ARI needs at least two items".into()));
    }
    let mut cells: HashMap<(usize, usize), u64> = HashMap::new();
    let mut rows: HashMap<usize, u64> = HashMap::new();
    let mut cols: HashMap<usize, u64> = HashMap::new();
    for (&a, &b) in labels_a.iter().zip(labels_b) {
        *cells.entry((a, b)).or_default() += 1;
        *rows.entry(a).or_default() += 1;
        *cols.entry(b).or_default() += 1;
    }
    let index: f64 = cells.values().map(|&c| pairs(c)).sum();
    let sum_a: f64 = rows.values().map(|&c| pairs(c)).sum();
    let sum_b: f64 = cols.values().map(|&c| pairs(c)).sum();
    let expected = sum_a * sum_b / pairs(n as u64);
    let max_index = 0.5 * (sum_a + sum_b);
    let denom = max_index - expected;
    if denom == 0.0 {
        return Ok(1.0);
    }
    Ok((index - expected) / denom)
}

/// `sqrt(1 − Σ_k sqrt(p_k q_k))`, in `[0, 1]`.
pub fn hellinger(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::Dimension(format!(
            "distributions have {} and {} categories",
            p.len(),
            q.len()
        )));
    }
    if p.iter().chain(q).any(|&v| !(v >= 0.0)) {
        return Err(Error::Domain("probabilities must be non-negative".into()));
    }
    for (name, v) in [("p", p), ("q", q)] {
        let s: f64 = v.iter().sum();
        if (s - 1.0).abs() > 1e-9 {
            return Err(Error::Domain(format!("{name} sums to {s}, not 1")));
        }
    }
    let bc: f64 = p.iter().zip(q).map(|(a, b)| (a * b).sqrt()).sum();
    Ok((1.0 - bc).max(0.0).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestOutcome {
    pub statistic: f64,
    pub null_samples: Vec<f64>,
    /// `(1 + #{H_i ≥ H}) / (1 + B)`.
    pub p_value: f64,
}

/// Distinguishes statistics that differ only by rounding.
const TIE_TOL: f64 = 1e-12;

fn membership_hellinger(assignments: &[usize], lines: &[usize], k: usize) -> f64 {
    let mut counts = [vec![0.0; k], vec![0.0; k]];
    let mut totals = [0.0f64; 2];
    for (&c, &l) in assignments.iter().zip(lines) {
        counts[l][c] += 1.0;
        totals[l] += 1.0;
    }
    let bc: f64 = (0..k)
        .map(|c| (counts[0][c] / totals[0] * counts[1][c] / totals[1]).sqrt())
        .sum();
    (1.0 - bc).max(0.0).sqrt()
}

/// Hellinger distance between the cluster-membership distributions of two
/// lines, with a permutation null obtained by shuffling line ids while the
/// cluster assignments stay fixed. `lines` holds 0 or 1 per item.
pub fn line_difference_test(assignments: &[usize], lines: &[usize], b: usize, seed: u64) -> Result<TestOutcome> {
    if assignments.len() != lines.len() {
        return Err(Error::Dimension(format!(
            "{} assignments for {} line ids",
            assignments.len(),
            lines.len()
        )));
    }
    if b == 0 {
        return Err(Error::InvalidInput("need at least one permutation".into()));
    }
    if let Some(&bad) = lines.iter().find(|&&l| l > 1) {
        return Err(Error::InvalidInput(format!("line ids must be 0 or 1, found {bad}")));
    }
    for line in 0..2 {
        if !lines.contains(&line) {
            return Err(Error::DegenerateTest(format!("line {line} has no members")));
        }
    }
    let k = assignments.iter().max().map_or(0, |&m| m + 1);

    let statistic = membership_hellinger(assignments, lines, k);
    let null_samples: Vec<f64> = (0..b)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(seed, &[i as u64]);
            let mut shuffled = lines.to_vec();
            shuffled.shuffle(&mut rng);
            membership_hellinger(assignments, &shuffled, k)
        })
        .collect();
    let exceed = null_samples.iter().filter(|&&h| h >= statistic - TIE_TOL).count();
    let p_value = (1 + exceed) as f64 / (1 + b) as f64;
    Ok(TestOutcome {
        statistic,
        null_samples,
        p_value,
    })
}

pub const ANSWER_MIN: usize = 2;
pub const ANSWER_MAX: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnsweringTime {
    At(usize),
    Never,
}

/// Smallest `n` in `2..=30` such that every p-value from `n` through 30 is
/// at most `alpha`.
pub fn answering_time(p_values: &BTreeMap<usize, f64>, alpha: f64) -> Result<AnsweringTime> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidInput(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let mut answer = AnsweringTime::Never;
    for q in (ANSWER_MIN..=ANSWER_MAX).rev() {
        let p = *p_values
            .get(&q)
            .ok_or_else(|| Error::InvalidInput(format!("missing p-value for q = {q}")))?;
        if p > alpha {
            break;
        }
        answer = AnsweringTime::At(q);
    }
    // every index must be present even after an early break
    if let Some(q) = (ANSWER_MIN..=ANSWER_MAX).find(|q| !p_values.contains_key(q)) {
        return Err(Error::InvalidInput(format!("missing p-value for q = {q}")));
    }
    Ok(answer)
}
