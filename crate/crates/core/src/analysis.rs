//! Closed-form misselection probabilities for nested Gaussian-mean models.
//!
//! For `M₁ = {N(μ, I)}` in `d` dimensions against the submodel `M₀` that
//! zeroes the last `d − d₀` coordinates, the statistic `n‖x̄ − x̄₀‖²` is
//! noncentral χ² under the alternative and central χ² under the null, both
//! with `d − d₀` degrees of freedom. `BIC'(m)` picks `M₁` while BIC picks
//! `M₀` exactly when that statistic falls in
//! `((d − d₀) log m, (d − d₀) log n)`.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;
const MAX_SERIES_TERMS: usize = 1_000_000;
const EPS: f64 = 1e-16;

/// Natural log of the gamma function for `x > 0`.
pub fn ln_gamma(x: f64) -> f64 {
    if x < 15.0 {
        // Shift up: Γ(x) = Γ(x + k) / (x (x+1) … (x+k−1)).
        let mut shift = 0.0;
        let mut y = x;
        while y < 15.0 {
            shift += y.ln();
            y += 1.0;
        }
        return ln_gamma(y) - shift;
    }
    // Stirling series, accurate to double precision for x ≥ 15.
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    let series = inv
        * (1.0 / 12.0
            - inv2 * (1.0 / 360.0 - inv2 * (1.0 / 1260.0 - inv2 * (1.0 / 1680.0 - inv2 * (1.0 / 1188.0)))));
    (x - 0.5) * x.ln() - x + LN_SQRT_2PI + series
}

/// Regularized lower incomplete gamma `P(a, x)`.
pub fn reg_lower_gamma(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x.is_infinite() {
        return 1.0;
    }
    let log_prefix = -x + a * x.ln() - ln_gamma(a);
    if x < a + 1.0 {
        let mut term = 1.0 / a;
        let mut sum = term;
        for n in 1..MAX_SERIES_TERMS {
            term *= x / (a + n as f64);
            sum += term;
            if term.abs() < sum.abs() * EPS {
                break;
            }
        }
        (sum.ln() + log_prefix).exp().min(1.0)
    } else {
        1.0 - upper_gamma_fraction(a, x, log_prefix)
    }
}

/// `Q(a, x)` by the modified Lentz continued fraction, valid for `x ≥ a + 1`.
fn upper_gamma_fraction(a: f64, x: f64, log_prefix: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..MAX_SERIES_TERMS {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < EPS {
            break;
        }
    }
    (log_prefix + h.ln()).exp()
}

/// `P(χ²_df ≤ x)`. Returns 0 for `x ≤ 0` and NaN when `df ≤ 0`.
pub fn chi2_cdf(x: f64, df: f64) -> f64 {
    if !(df > 0.0) {
        return f64::NAN;
    }
    if x <= 0.0 {
        return 0.0;
    }
    reg_lower_gamma(0.5 * df, 0.5 * x)
}

/// Noncentral χ² CDF as a Poisson(ncp/2) mixture of central χ² CDFs with
/// `df + 2j` degrees of freedom. Summation starts at the Poisson mode and
/// walks outward until the neglected weight is below `1e-12`.
pub fn noncentral_chi2_cdf(x: f64, df: f64, ncp: f64) -> f64 {
    if !(df > 0.0) || !(ncp >= 0.0) {
        return f64::NAN;
    }
    if x <= 0.0 {
        return 0.0;
    }
    if ncp == 0.0 {
        return chi2_cdf(x, df);
    }
    let lambda = 0.5 * ncp;
    let log_weight = |j: f64| -lambda + j * lambda.ln() - ln_gamma(j + 1.0);
    let mode = lambda.floor();

    let mut mass = 0.0;
    let mut total = 0.0;

    // Downward from the mode. Below the mode weights shrink geometrically
    // with ratio j/λ, so the remaining tail is bounded by w·r/(1−r).
    let mut j = mode;
    loop {
        let w = log_weight(j).exp();
        mass += w;
        total += w * chi2_cdf(x, df + 2.0 * j);
        if j == 0.0 {
            break;
        }
        let r = j / lambda;
        if r < 1.0 && w * r / (1.0 - r) < 1e-14 {
            break;
        }
        j -= 1.0;
    }

    // Upward. The central CDF decreases in j, so once either the remaining
    // Poisson mass or the CDF times that mass is negligible we can stop.
    let mut j = mode + 1.0;
    loop {
        let w = log_weight(j).exp();
        let f = chi2_cdf(x, df + 2.0 * j);
        mass += w;
        total += w * f;
        let remaining = (1.0 - mass).max(0.0);
        if remaining < 1e-12 || f * remaining < 1e-14 || j > mode + 1e7 {
            break;
        }
        j += 1.0;
    }
    total.clamp(0.0, 1.0)
}

/// Nested Gaussian-mean comparison: `d` free coordinates against `d₀`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NestedModelSpec {
    pub d: usize,
    pub d0: usize,
    pub n: u64,
    pub m: f64,
}

impl NestedModelSpec {
    pub fn new(d: usize, d0: usize, n: u64, m: f64) -> Result<Self> {
        let spec = NestedModelSpec { d, d0, n, m };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.d0 < 1 || self.d0 >= self.d {
            return Err(Error::Domain(format!("need 1 ≤ d0 < d, got d = {}, d0 = {}", self.d, self.d0)));
        }
        if self.n < 2 {
            return Err(Error::Domain(format!("need n ≥ 2, got {}", self.n)));
        }
        if !(self.m >= 1.0) || !self.m.is_finite() {
            return Err(Error::Domain(format!("need m ≥ 1, got {}", self.m)));
        }
        Ok(())
    }

    pub fn df(&self) -> f64 {
        (self.d - self.d0) as f64
    }

    /// `n Σ_{j=d₀+1}^{d} 1/j`, from the alternative mean `μ*_j = 1/√j`.
    pub fn ncp(&self) -> f64 {
        self.n as f64 * ((self.d0 + 1)..=self.d).map(|j| 1.0 / j as f64).sum::<f64>()
    }

    /// `((d − d₀) log m, (d − d₀) log n)`.
    pub fn interval(&self) -> (f64, f64) {
        (self.df() * self.m.ln(), self.df() * (self.n as f64).ln())
    }
}

/// Probability, under the alternative, that `BIC'(m)` correctly picks the
/// larger model where BIC would not.
pub fn prob_case2a(spec: &NestedModelSpec) -> Result<f64> {
    spec.validate()?;
    if spec.m > spec.n as f64 {
        return Ok(0.0);
    }
    let (lo, hi) = spec.interval();
    let (df, ncp) = (spec.df(), spec.ncp());
    Ok((noncentral_chi2_cdf(hi, df, ncp) - noncentral_chi2_cdf(lo, df, ncp)).max(0.0))
}

/// Probability, under the null, that `BIC'(m)` wrongly picks the larger
/// model where BIC would not.
pub fn prob_case2b(spec: &NestedModelSpec) -> Result<f64> {
    spec.validate()?;
    if spec.m > spec.n as f64 {
        return Ok(0.0);
    }
    let (lo, hi) = spec.interval();
    let df = spec.df();
    Ok((chi2_cdf(hi, df) - chi2_cdf(lo, df)).max(0.0))
}

/// Large-sample probability `F(log n) − F(log m)` for nested models, with
/// `F` the `F(d₁ − d₀, ∞)` distribution, i.e. `χ²_{d₁−d₀} / (d₁ − d₀)`.
pub fn prob_nested_limit(d1: usize, d0: usize, n: u64, m: f64) -> Result<f64> {
    if d1 <= d0 {
        return Err(Error::Domain(format!("need d1 > d0, got {d1} ≤ {d0}")));
    }
    if !(m > 1.0) || !m.is_finite() {
        return Err(Error::Domain(format!("need m > 1, got {m}")));
    }
    if m > n as f64 {
        return Ok(0.0);
    }
    let k = (d1 - d0) as f64;
    Ok((chi2_cdf(k * (n as f64).ln(), k) - chi2_cdf(k * m.ln(), k)).max(0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepAxis {
    N,
    D,
    D0,
}

impl SweepAxis {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepAxis::N => "n",
            SweepAxis::D => "d",
            SweepAxis::D0 => "d0",
        }
    }
}

impl std::str::FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "n" => Ok(SweepAxis::N),
            "d" => Ok(SweepAxis::D),
            "d0" => Ok(SweepAxis::D0),
            other => Err(Error::InvalidInput(format!("unknown sweep axis {other:?}"))),
        }
    }
}

/// Values held fixed during a sweep. When sweeping `d`, either `d0` or
/// `gap` (`d0 = d − gap`) must be set.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FixedParams {
    pub d: Option<usize>,
    pub d0: Option<usize>,
    pub n: Option<u64>,
    pub gap: Option<usize>,
}

/// Axis and fixed values behind the three published curve families.
pub fn figure_preset(figure: u8) -> Result<(SweepAxis, FixedParams)> {
    match figure {
        1 => Ok((
            SweepAxis::N,
            FixedParams {
                d: Some(200),
                d0: Some(190),
                ..FixedParams::default()
            },
        )),
        2 => Ok((
            SweepAxis::D,
            FixedParams {
                n: Some(1000),
                gap: Some(10),
                ..FixedParams::default()
            },
        )),
        3 => Ok((
            SweepAxis::D0,
            FixedParams {
                n: Some(1000),
                d: Some(200),
                ..FixedParams::default()
            },
        )),
        other => Err(Error::InvalidInput(format!("no figure preset {other} (expected 1, 2 or 3)"))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FigureRow {
    pub axis: SweepAxis,
    pub value: u64,
    pub m: f64,
    pub prob_2a: f64,
    pub prob_2b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedPoint {
    pub value: u64,
    pub m: f64,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FigureTable {
    pub rows: Vec<FigureRow>,
    pub skipped: Vec<SkippedPoint>,
}

impl FigureTable {
    /// CSV with columns `axis,value,m,prob_2a,prob_2b`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["axis", "value", "m", "prob_2a", "prob_2b"])?;
        for r in &self.rows {
            w.write_record([
                r.axis.as_str().to_string(),
                r.value.to_string(),
                format!("{:?}", r.m),
                format!("{:?}", r.prob_2a),
                format!("{:?}", r.prob_2b),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn spec_at(axis: SweepAxis, value: u64, fixed: &FixedParams, m: f64) -> Result<NestedModelSpec> {
    let missing = |what: &str| Error::InvalidInput(format!("sweeping {} needs a fixed {what}", axis.as_str()));
    let (d, d0, n) = match axis {
        SweepAxis::N => (fixed.d.ok_or_else(|| missing("d"))?, fixed.d0.ok_or_else(|| missing("d0"))?, value),
        SweepAxis::D => {
            let d = value as usize;
            let d0 = match (fixed.d0, fixed.gap) {
                (Some(d0), _) => d0,
                (None, Some(gap)) => d.checked_sub(gap).ok_or_else(|| Error::Domain(format!("d = {d} is below gap {gap}")))?,
                (None, None) => return Err(missing("d0 or gap")),
            };
            (d, d0, fixed.n.ok_or_else(|| missing("n"))?)
        }
        SweepAxis::D0 => (fixed.d.ok_or_else(|| missing("d"))?, value as usize, fixed.n.ok_or_else(|| missing("n"))?),
    };
    NestedModelSpec::new(d, d0, n, m)
}

/// Evaluates both misselection probabilities over `grid × m_list`. Invalid
/// grid points are reported in `skipped` rather than failing the sweep.
pub fn figure_sweep(axis: SweepAxis, grid: &[u64], fixed: &FixedParams, m_list: &[f64]) -> Result<FigureTable> {
    if grid.is_empty() || m_list.is_empty() {
        return Err(Error::InvalidInput("figure sweep needs a non-empty grid and m list".into()));
    }
    let points: Vec<(u64, f64)> = grid
        .iter()
        .flat_map(|&v| m_list.iter().map(move |&m| (v, m)))
        .collect();
    let evaluated: Vec<Result<FigureRow>> = points
        .par_iter()
        .map(|&(value, m)| {
            let spec = spec_at(axis, value, fixed, m)?;
            Ok(FigureRow {
                axis,
                value,
                m,
                prob_2a: prob_case2a(&spec)?,
                prob_2b: prob_case2b(&spec)?,
            })
        })
        .collect();
    let mut table = FigureTable::default();
    for ((value, m), r) in points.into_iter().zip(evaluated) {
        match r {
            Ok(row) => table.rows.push(row),
            Err(Error::InvalidInput(msg)) => return Err(Error::InvalidInput(msg)),
            Err(e) => table.skipped.push(SkippedPoint {
                value,
                m,
                reason: e.to_string(),
            }),
        }
    }
    Ok(table)
}
