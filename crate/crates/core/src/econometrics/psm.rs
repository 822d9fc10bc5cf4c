//! Propensity-score matching: logit scores, greedy one-to-one nearest
//! neighbour without replacement, covariate balance.

use serde::Serialize;

use super::design::{complete_rows, Family, ModelSpec};
use super::glm::fit_logit;
use crate::error::{Error, Result};
use crate::panel::Panel;

pub const PAIR_COLUMN: &str = "match_pair";
pub const SCORE_COLUMN: &str = "pscore";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatchedPair {
    /// Panel row of the treated unit.
    pub treated: usize,
    /// Panel row of the matched control.
    pub control: usize,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BalanceRow {
    pub covariate: String,
    pub mean_treated_pre: f64,
    pub mean_control_pre: f64,
    pub smd_pre: f64,
    pub mean_treated_post: f64,
    pub mean_control_post: f64,
    pub smd_post: f64,
}

#[derive(Debug, Clone)]
pub struct MatchResult {
    pub pairs: Vec<MatchedPair>,
    /// Propensity score per panel row; NaN for rows with missing inputs.
    pub propensity: Vec<f64>,
    /// Treated and control rows of each pair, in pair order, with the pair
    /// index and propensity score appended.
    pub matched: Panel,
    pub balance: Vec<BalanceRow>,
    pub unmatched_treated: usize,
}

impl MatchResult {
    pub fn max_abs_smd_pre(&self) -> f64 {
        self.balance.iter().map(|b| b.smd_pre.abs()).fold(0.0, f64::max)
    }

    pub fn max_abs_smd_post(&self) -> f64 {
        self.balance.iter().map(|b| b.smd_post.abs()).fold(0.0, f64::max)
    }
}

fn mean_var(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let v: Vec<f64> = values.collect();
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 {
        v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var)
}

/// Matches each treated unit, in row order, to the closest unused control
/// by propensity score (ties go to the lowest row). With a caliper, treated
/// units whose closest control is farther away stay unmatched.
///
/// Standardised mean differences divide by the pre-match pooled standard
/// deviation `sqrt((s_t^2 + s_c^2) / 2)` both before and after matching.
pub fn propensity_match(data: &Panel, treatment: &str, covariates: &[String], caliper: Option<f64>) -> Result<MatchResult> {
    if let Some(c) = caliper {
        if !(c >= 0.0) {
            return Err(Error::InvalidParameter(format!("caliper must be non-negative, got {c}")));
        }
    }
    let mut cols: Vec<&str> = vec![treatment];
    cols.extend(covariates.iter().map(String::as_str));
    let rows = complete_rows(data, &cols)?;
    let t = data.column(treatment)?;
    let mut treated = Vec::new();
    let mut controls = Vec::new();
    for &r in &rows {
        match t[r] {
            1.0 => treated.push(r),
            0.0 => controls.push(r),
            v => return Err(Error::Spec(format!("treatment `{treatment}` is not binary (value {v} at row {r})"))),
        }
    }
    if treated.is_empty() {
        return Err(Error::EmptyArm("no treated units".into()));
    }
    if controls.is_empty() {
        return Err(Error::EmptyArm("no control units".into()));
    }
    let spec = ModelSpec::new(treatment, covariates.iter().cloned(), Family::Logit);
    let fit = fit_logit(data, &spec)?;
    let scores = fit.fitted(data)?;
    let mut propensity = vec![f64::NAN; data.nrows()];
    for (&r, &s) in fit.rows.iter().zip(&scores) {
        propensity[r] = s;
    }

    let mut used = vec![false; controls.len()];
    let mut pairs = Vec::new();
    for &tr in &treated {
        let pt = propensity[tr];
        let mut best: Option<(usize, f64)> = None;
        for (ci, &cr) in controls.iter().enumerate() {
            if used[ci] {
                continue;
            }
            let dist = (pt - propensity[cr]).abs();
            if best.is_none_or(|(_, bd)| dist < bd) {
                best = Some((ci, dist));
            }
        }
        let Some((ci, dist)) = best else { break };
        if caliper.is_some_and(|c| dist > c) {
            continue;
        }
        used[ci] = true;
        pairs.push(MatchedPair {
            treated: tr,
            control: controls[ci],
            distance: dist,
        });
    }
    if pairs.is_empty() {
        return Err(Error::NoMatches);
    }

    let balance = covariates
        .iter()
        .map(|name| {
            let x = data.column(name)?;
            let (mt, vt) = mean_var(treated.iter().map(|&r| x[r]));
            let (mc, vc) = mean_var(controls.iter().map(|&r| x[r]));
            let sd = ((vt + vc) / 2.0).sqrt();
            let smd = |a: f64, b: f64| if sd > 0.0 { (a - b) / sd } else { 0.0 };
            let (mtp, _) = mean_var(pairs.iter().map(|p| x[p.treated]));
            let (mcp, _) = mean_var(pairs.iter().map(|p| x[p.control]));
            Ok(BalanceRow {
                covariate: name.clone(),
                mean_treated_pre: mt,
                mean_control_pre: mc,
                smd_pre: smd(mt, mc),
                mean_treated_post: mtp,
                mean_control_post: mcp,
                smd_post: smd(mtp, mcp),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let order: Vec<usize> = pairs.iter().flat_map(|p| [p.treated, p.control]).collect();
    let mut matched = data.select_rows(&order);
    matched.set_column(PAIR_COLUMN, pairs.iter().enumerate().flat_map(|(i, _)| [i as f64; 2]).collect())?;
    matched.set_column(SCORE_COLUMN, order.iter().map(|&r| propensity[r]).collect())?;
    Ok(MatchResult {
        unmatched_treated: treated.len() - pairs.len(),
        pairs,
        propensity,
        matched,
        balance,
    })
}
