//! Coefficient-equality tests across two groups: interaction Wald tests and
//! a label-permutation test.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use super::design::{complete_rows, ModelSpec};
use super::fit::{CoefRow, FitResult};
use super::glm::fit;
use super::vcov::spd_inverse;
use crate::error::{Error, Result};
use crate::panel::Panel;

pub const MIN_PERMUTATIONS: usize = 100;

pub fn interaction_name(group: &str, regressor: &str) -> String {
    format!("{group}:{regressor}")
}

#[derive(Debug, Clone)]
pub struct ChowResult {
    pub fit: FitResult,
    /// One row per regressor: the group x regressor interaction.
    pub terms: Vec<CoefRow>,
    pub joint_chi2: f64,
    pub joint_df: usize,
    pub joint_p: f64,
}

/// Pooled model plus the group dummy and group x regressor interactions.
fn augmented(data: &Panel, spec: &ModelSpec, group: &str, labels: Option<&[f64]>) -> Result<(Panel, ModelSpec)> {
    if spec.regressors.iter().any(|r| r == group) || spec.response == group {
        return Err(Error::Spec(format!("group column `{group}` is already part of the model")));
    }
    let mut panel = data.clone();
    if let Some(l) = labels {
        panel.set_column(group, l.to_vec())?;
    }
    let mut regressors = spec.regressors.clone();
    regressors.push(group.to_string());
    for r in &spec.regressors {
        let name = interaction_name(group, r);
        panel.derive_column(&name, &[group, r], |v| v[0] * v[1])?;
        regressors.push(name);
    }
    Ok((
        panel,
        ModelSpec {
            regressors,
            ..spec.clone()
        },
    ))
}

fn check_group(data: &Panel, spec: &ModelSpec, group: &str) -> Result<Vec<usize>> {
    let mut cols = spec.columns();
    cols.push(group);
    let rows = complete_rows(data, &cols)?;
    let g = data.column(group)?;
    let mut seen = [false; 2];
    for &r in &rows {
        match g[r] {
            0.0 => seen[0] = true,
            1.0 => seen[1] = true,
            v => return Err(Error::Spec(format!("group `{group}` is not binary (value {v} at row {r})"))),
        }
    }
    if !(seen[0] && seen[1]) {
        return Err(Error::Spec(format!("group `{group}` is constant on the estimation sample")));
    }
    Ok(rows)
}

fn gaps(fit: &FitResult, spec: &ModelSpec, group: &str) -> Result<Vec<f64>> {
    spec.regressors
        .iter()
        .map(|r| fit.coef(&interaction_name(group, r)))
        .collect()
}

pub fn chow_test(data: &Panel, spec: &ModelSpec, group: &str) -> Result<ChowResult> {
    check_group(data, spec, group)?;
    let (panel, aug) = augmented(data, spec, group, None)?;
    let fit = fit(&panel, &aug)?;
    let idx = spec
        .regressors
        .iter()
        .map(|r| fit.index(&interaction_name(group, r)))
        .collect::<Result<Vec<_>>>()?;
    let terms: Vec<CoefRow> = idx
        .iter()
        .map(|&i| CoefRow::new(fit.names[i].clone(), fit.coefficients[i], fit.std_errors[i]))
        .collect();
    let m = idx.len();
    let (joint_chi2, joint_p) = if m == 0 {
        (0.0, 1.0)
    } else {
        let sub = nalgebra::DMatrix::from_fn(m, m, |a, b| fit.vcov[(idx[a], idx[b])]);
        let delta = nalgebra::DVector::from_iterator(m, idx.iter().map(|&i| fit.coefficients[i]));
        let inv = spd_inverse(&sub)
            .ok_or_else(|| Error::RankDeficient("interaction covariance is singular".into()))?;
        let chi2 = (delta.transpose() * inv * &delta)[(0, 0)];
        let dist = ChiSquared::new(m as f64).expect("positive degrees of freedom");
        (chi2, dist.sf(chi2))
    };
    Ok(ChowResult {
        fit,
        terms,
        joint_chi2,
        joint_df: m,
        joint_p,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PermutationTerm {
    pub regressor: String,
    pub observed_gap: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PermutationResult {
    pub terms: Vec<PermutationTerm>,
    pub replications: usize,
    /// Permutations whose refit failed (separation etc.) and were left out.
    pub failed: usize,
    pub seed: u64,
}

/// Fisher permutation test of the between-group coefficient gaps.
///
/// Group labels are shuffled across the estimation rows; replicate `r` draws
/// from `ChaCha8` seeded with `seed` on stream `r`. The p-value for each
/// regressor is `(1 + #{|gap_perm| >= |gap_obs|}) / (1 + successful refits)`.
pub fn permutation_test(data: &Panel, spec: &ModelSpec, group: &str, replications: usize, seed: u64) -> Result<PermutationResult> {
    if replications < MIN_PERMUTATIONS {
        return Err(Error::InvalidParameter(format!(
            "need at least {MIN_PERMUTATIONS} permutations, got {replications}"
        )));
    }
    let rows = check_group(data, spec, group)?;
    let (panel, aug) = augmented(data, spec, group, None)?;
    let observed = gaps(&fit(&panel, &aug)?, spec, group)?;
    let labels = data.column(group)?;
    let base: Vec<f64> = rows.iter().map(|&r| labels[r]).collect();
    let mut exceed = vec![0usize; observed.len()];
    let mut ok = 0usize;
    let mut failed = 0usize;
    for rep in 0..replications {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(rep as u64);
        let mut perm = base.clone();
        perm.shuffle(&mut rng);
        let mut full = labels.to_vec();
        for (&r, &v) in rows.iter().zip(&perm) {
            full[r] = v;
        }
        let (p, a) = augmented(data, spec, group, Some(&full))?;
        match fit(&p, &a).and_then(|f| gaps(&f, spec, group)) {
            Ok(g) => {
                ok += 1;
                for ((e, gp), go) in exceed.iter_mut().zip(&g).zip(&observed) {
                    if gp.abs() >= go.abs() {
                        *e += 1;
                    }
                }
            }
            Err(_) => failed += 1,
        }
    }
    Ok(PermutationResult {
        terms: spec
            .regressors
            .iter()
            .zip(&observed)
            .zip(&exceed)
            .map(|((r, &g), &e)| PermutationTerm {
                regressor: r.clone(),
                observed_gap: g,
                p_value: (1 + e) as f64 / (1 + ok) as f64,
            })
            .collect(),
        replications,
        failed,
        seed,
    })
}
