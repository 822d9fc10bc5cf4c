//! Fitted-model results and the shared Newton maximiser.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::design::{FixedEffectLevels, ModelSpec};
use super::normal::two_sided_p;
use super::vcov::VcovKind;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct FitResult {
    pub spec: ModelSpec,
    pub names: Vec<String>,
    pub coefficients: Vec<f64>,
    pub vcov: DMatrix<f64>,
    pub vcov_kind: VcovKind,
    pub std_errors: Vec<f64>,
    /// Likelihood families only.
    pub log_likelihood: Option<f64>,
    /// Linear family only.
    pub rss: Option<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub score_max_norm: f64,
    pub n_obs: usize,
    pub n_clusters: usize,
    pub fe_levels: Vec<FixedEffectLevels>,
    /// Inverse of the observed information (or of `X'X`).
    pub inverse_information: DMatrix<f64>,
    /// Panel rows used in estimation.
    pub rows: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoefRow {
    pub name: String,
    pub estimate: f64,
    pub se: f64,
    pub z: f64,
    pub p: f64,
}

impl CoefRow {
    pub fn new(name: impl Into<String>, estimate: f64, se: f64) -> Self {
        let z = estimate / se;
        Self {
            name: name.into(),
            estimate,
            se,
            z,
            p: two_sided_p(z),
        }
    }
}

impl FitResult {
    pub fn index(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::UnknownColumn(name.to_string()))
    }

    pub fn coef(&self, name: &str) -> Result<f64> {
        Ok(self.coefficients[self.index(name)?])
    }

    pub fn se(&self, name: &str) -> Result<f64> {
        Ok(self.std_errors[self.index(name)?])
    }

    pub fn z(&self, name: &str) -> Result<f64> {
        let i = self.index(name)?;
        Ok(self.coefficients[i] / self.std_errors[i])
    }

    pub fn p_value(&self, name: &str) -> Result<f64> {
        Ok(two_sided_p(self.z(name)?))
    }

    pub fn coef_table(&self) -> Vec<CoefRow> {
        self.names
            .iter()
            .zip(&self.coefficients)
            .zip(&self.std_errors)
            .map(|((n, &b), &s)| CoefRow::new(n.clone(), b, s))
            .collect()
    }

    pub fn beta(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.coefficients)
    }
}

pub(crate) fn std_errors(vcov: &DMatrix<f64>) -> Vec<f64> {
    (0..vcov.nrows()).map(|i| vcov[(i, i)].max(0.0).sqrt()).collect()
}

/// Log-likelihood with, optionally, gradient and negative Hessian.
pub(crate) struct Eval {
    pub ll: f64,
    pub derivs: Option<(DVector<f64>, DMatrix<f64>)>,
}

pub(crate) struct NewtonSettings {
    pub tol: f64,
    pub max_iter: usize,
    pub max_halvings: usize,
    /// Bound on `|beta_j| * scale_j` treated as divergence.
    pub max_abs_coef: Option<f64>,
    /// Per-coefficient scale, typically `max_i |x_ij|`; empty means 1.
    pub scales: Vec<f64>,
    /// Whether a failed line search signals separation.
    pub stall_is_separation: bool,
}

impl Default for NewtonSettings {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 100,
            max_halvings: 5,
            max_abs_coef: Some(30.0),
            scales: Vec::new(),
            stall_is_separation: true,
        }
    }
}

pub(crate) struct NewtonOutcome {
    pub beta: DVector<f64>,
    pub ll: f64,
    pub grad: DVector<f64>,
    pub neg_hessian: DMatrix<f64>,
    pub iterations: usize,
}

fn max_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Solves `H step = g`, adding a growing ridge when `H` is not positive definite.
fn newton_step(h: &DMatrix<f64>, g: &DVector<f64>) -> Option<DVector<f64>> {
    if let Some(c) = h.clone().cholesky() {
        return Some(c.solve(g));
    }
    let scale = (0..h.nrows()).map(|i| h[(i, i)].abs()).fold(1e-8, f64::max);
    let mut mu = 1e-6 * scale;
    for _ in 0..40 {
        let mut hr = h.clone();
        for i in 0..hr.nrows() {
            hr[(i, i)] += mu;
        }
        if let Some(c) = hr.cholesky() {
            return Some(c.solve(g));
        }
        mu *= 10.0;
    }
    None
}

pub(crate) fn newton_maximize<F>(start: DVector<f64>, names: &[String], settings: &NewtonSettings, mut eval: F) -> Result<NewtonOutcome>
where
    F: FnMut(&DVector<f64>, bool) -> Eval,
{
    let full = |e: Eval| e.derivs.expect("derivatives requested");
    let mut beta = start;
    let first = eval(&beta, true);
    if !first.ll.is_finite() {
        return Err(Error::InvalidParameter("log-likelihood is not finite at the start values".into()));
    }
    let mut ll = first.ll;
    let (mut grad, mut hess) = full(first);
    let slack = |ll: f64| 1e-13 * (1.0 + ll.abs());

    for iter in 0..=settings.max_iter {
        let norm = max_norm(&grad);
        if norm <= settings.tol {
            // One polishing step, kept only if it does not hurt.
            if let Some(step) = newton_step(&hess, &grad) {
                let cand = &beta + step;
                let e = eval(&cand, true);
                if e.ll.is_finite() && e.ll >= ll - slack(ll) {
                    let ll2 = e.ll;
                    let (g2, h2) = full(e);
                    if max_norm(&g2) <= norm {
                        return Ok(NewtonOutcome {
                            beta: cand,
                            ll: ll2,
                            grad: g2,
                            neg_hessian: h2,
                            iterations: iter,
                        });
                    }
                }
            }
            return Ok(NewtonOutcome {
                beta,
                ll,
                grad,
                neg_hessian: hess,
                iterations: iter,
            });
        }
        if iter == settings.max_iter {
            break;
        }
        let step = newton_step(&hess, &grad).ok_or_else(|| {
            Error::RankDeficient(names.first().cloned().unwrap_or_default())
        })?;
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..=settings.max_halvings {
            let cand = &beta + &step * t;
            let e = eval(&cand, false);
            if e.ll.is_finite() && e.ll >= ll - slack(ll) {
                accepted = Some(cand);
                break;
            }
            t *= 0.5;
        }
        let Some(next) = accepted else {
            return Err(if settings.stall_is_separation {
                Error::Separation(format!(
                    "no likelihood improvement after {} step halvings",
                    settings.max_halvings
                ))
            } else {
                Error::NoConvergence {
                    iterations: iter + 1,
                    score_norm: norm,
                }
            });
        };
        beta = next;
        if let Some(bound) = settings.max_abs_coef {
            if let Some((j, b)) = beta.iter().enumerate().find(|(j, b)| b.abs() * settings.scales.get(*j).copied().unwrap_or(1.0) > bound) {
                return Err(Error::Separation(format!(
                    "coefficient `{}` reached {b:.3}",
                    names.get(j).map_or("?", String::as_str)
                )));
            }
        }
        let e = eval(&beta, true);
        ll = e.ll;
        (grad, hess) = full(e);
    }
    Err(Error::NoConvergence {
        iterations: settings.max_iter,
        score_norm: max_norm(&grad),
    })
}

impl NewtonOutcome {
    pub fn score_max_norm(&self) -> f64 {
        max_norm(&self.grad)
    }
}
