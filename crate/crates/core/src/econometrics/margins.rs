//! Average marginal effects for binary-response fits.

use serde::{Deserialize, Serialize};

use super::design::Design;
use super::fit::FitResult;
use super::glm::Link;
use crate::error::{Error, Result};
use crate::panel::Panel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EffectKind {
    /// Sample mean of the derivative of P with respect to the regressor.
    Derivative,
    /// Sample mean of P(x = 1) - P(x = 0).
    DiscreteChange,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalEffect {
    pub name: String,
    pub ame: f64,
    pub kind: EffectKind,
}

fn is_binary(values: impl Iterator<Item = f64>) -> bool {
    let mut seen = [false; 2];
    for v in values {
        if v == 0.0 {
            seen[0] = true;
        } else if v == 1.0 {
            seen[1] = true;
        } else {
            return false;
        }
    }
    seen[0] && seen[1]
}

/// Average marginal effects (AME) of every regressor, evaluated over the
/// estimation sample. Regressors taking only the values 0 and 1 use the
/// discrete change.
pub fn average_marginal_effects(fit: &FitResult, data: &Panel) -> Result<Vec<MarginalEffect>> {
    if !fit.converged {
        return Err(Error::Unfitted("fit did not converge".into()));
    }
    let Some(link) = Link::of(fit.spec.family) else {
        return Err(Error::Unfitted("marginal effects need a logit or probit fit".into()));
    };
    let design = Design::build_rows(data, &fit.spec, &fit.rows, Some(&fit.fe_levels))?;
    if design.names != fit.names {
        return Err(Error::Unfitted("data do not reproduce the fitted design".into()));
    }
    let beta = fit.beta();
    let eta = &design.x * &beta;
    let n = design.nobs() as f64;
    let first = usize::from(fit.spec.intercept);
    let mut out = Vec::with_capacity(fit.spec.regressors.len());
    for (offset, name) in fit.spec.regressors.iter().enumerate() {
        let j = first + offset;
        let b = beta[j];
        let col = design.x.column(j);
        if is_binary(col.iter().copied()) {
            let ame = (0..design.nobs())
                .map(|i| {
                    let base = eta[i] - b * col[i];
                    link.prob(base + b) - link.prob(base)
                })
                .sum::<f64>()
                / n;
            out.push(MarginalEffect {
                name: name.clone(),
                ame,
                kind: EffectKind::DiscreteChange,
            });
        } else {
            let mean_density = eta.iter().map(|&e| link.density(e)).sum::<f64>() / n;
            out.push(MarginalEffect {
                name: name.clone(),
                ame: b * mean_density,
                kind: EffectKind::Derivative,
            });
        }
    }
    Ok(out)
}
