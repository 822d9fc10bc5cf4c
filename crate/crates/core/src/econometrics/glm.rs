//! Binary-response MLE (logit, probit) and least squares, with fixed-effect
//! dummies and cluster-robust covariance.

use nalgebra::{DMatrix, DVector};

use super::design::{Design, Family, ModelSpec, INTERCEPT};
use super::fit::{newton_maximize, std_errors, Eval, FitResult, NewtonSettings};
use super::normal;
use super::vcov::{cluster_robust_vcov, hc0_vcov, spd_inverse, VcovKind};
use crate::error::{Error, Result};
use crate::panel::Panel;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Link {
    Logit,
    Probit,
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub(crate) fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Link {
    pub fn of(family: Family) -> Option<Link> {
        match family {
            Family::Logit => Some(Link::Logit),
            Family::Probit => Some(Link::Probit),
            Family::Linear => None,
        }
    }

    pub fn prob(self, eta: f64) -> f64 {
        match self {
            Link::Logit => logistic(eta),
            Link::Probit => normal::cdf(eta),
        }
    }

    /// `dP/d eta`.
    pub fn density(self, eta: f64) -> f64 {
        match self {
            Link::Logit => {
                let p = logistic(eta);
                p * (1.0 - p)
            }
            Link::Probit => normal::pdf(eta),
        }
    }

    pub fn loglik(self, y: f64, eta: f64) -> f64 {
        match self {
            Link::Logit => y * eta - softplus(eta),
            Link::Probit => normal::ln_cdf((2.0 * y - 1.0) * eta),
        }
    }

    /// `(d l / d eta, -d^2 l / d eta^2)`.
    pub fn derivs(self, y: f64, eta: f64) -> (f64, f64) {
        match self {
            Link::Logit => {
                let p = logistic(eta);
                (y - p, p * (1.0 - p))
            }
            Link::Probit => {
                let q = 2.0 * y - 1.0;
                let lam = q * normal::mills(q * eta);
                (lam, lam * (lam + eta))
            }
        }
    }
}

/// `X' diag(w) X`.
pub(crate) fn weighted_gram(x: &DMatrix<f64>, w: &[f64]) -> DMatrix<f64> {
    score_rows(x, w).tr_mul(x)
}

/// Rows of `x` scaled by `s`: the per-observation score contributions.
pub(crate) fn score_rows(x: &DMatrix<f64>, s: &[f64]) -> DMatrix<f64> {
    let mut out = x.clone();
    for mut col in out.column_iter_mut() {
        for (v, &si) in col.iter_mut().zip(s) {
            *v *= si;
        }
    }
    out
}

pub(crate) fn sandwich(design: &Design, bread: &DMatrix<f64>, scores: &DMatrix<f64>) -> Result<(DMatrix<f64>, VcovKind)> {
    match &design.clusters {
        Some(ids) => Ok((cluster_robust_vcov(bread, scores, ids)?, VcovKind::Cluster)),
        None => Ok((hc0_vcov(bread, scores)?, VcovKind::Hc0)),
    }
}

fn check_binary(design: &Design, response: &str) -> Result<()> {
    let mut ones = 0usize;
    for (row, &v) in design.rows.iter().zip(design.y.iter()) {
        if v == 1.0 {
            ones += 1;
        } else if v != 0.0 {
            return Err(Error::Spec(format!(
                "response `{response}` is not binary (value {v} at row {row})"
            )));
        }
    }
    if ones == 0 || ones == design.nobs() {
        return Err(Error::Separation(format!("response `{response}` is constant")));
    }
    Ok(())
}

pub(crate) fn binary_eval(x: &DMatrix<f64>, y: &DVector<f64>, link: Link, beta: &DVector<f64>, derivs: bool) -> Eval {
    let eta = x * beta;
    let n = y.len();
    let mut ll = 0.0;
    if !derivs {
        for i in 0..n {
            ll += link.loglik(y[i], eta[i]);
        }
        return Eval { ll, derivs: None };
    }
    let mut s = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n {
        ll += link.loglik(y[i], eta[i]);
        (s[i], w[i]) = link.derivs(y[i], eta[i]);
    }
    let grad = x.tr_mul(&DVector::from_vec(s));
    let info = weighted_gram(x, &w);
    Eval {
        ll,
        derivs: Some((grad, info)),
    }
}

fn start_values(design: &Design, spec: &ModelSpec, link: Link) -> DVector<f64> {
    let mut b = DVector::zeros(design.ncols());
    if spec.intercept {
        let ybar = design.y.mean();
        let logit = (ybar / (1.0 - ybar)).ln();
        b[0] = match link {
            Link::Logit => logit,
            Link::Probit => logit / 1.6,
        };
    }
    b
}

fn fit_binary(data: &Panel, spec: &ModelSpec, link: Link) -> Result<FitResult> {
    let design = Design::build(data, spec)?;
    check_binary(&design, &spec.response)?;
    design.check_rank()?;
    fit_binary_design(&design, spec, link)
}

pub(crate) fn fit_binary_design(design: &Design, spec: &ModelSpec, link: Link) -> Result<FitResult> {
    let out = newton_maximize(
        start_values(design, spec, link),
        &design.names,
        &NewtonSettings {
            scales: design.x.column_iter().map(|c| c.amax()).collect(),
            ..NewtonSettings::default()
        },
        |b, d| binary_eval(&design.x, &design.y, link, b, d),
    )?;
    let bread = spd_inverse(&out.neg_hessian)
        .ok_or_else(|| Error::RankDeficient("information matrix is singular at the optimum".into()))?;
    let eta = &design.x * &out.beta;
    let s: Vec<f64> = (0..design.nobs()).map(|i| link.derivs(design.y[i], eta[i]).0).collect();
    let scores = score_rows(&design.x, &s);
    let (vcov, vcov_kind) = sandwich(design, &bread, &scores)?;
    Ok(FitResult {
        spec: spec.clone(),
        names: design.names.clone(),
        coefficients: out.beta.iter().copied().collect(),
        std_errors: std_errors(&vcov),
        vcov,
        vcov_kind,
        log_likelihood: Some(out.ll),
        rss: None,
        iterations: out.iterations,
        converged: true,
        score_max_norm: out.score_max_norm(),
        n_obs: design.nobs(),
        n_clusters: design.n_clusters,
        fe_levels: design.fe_levels.clone(),
        inverse_information: bread,
        rows: design.rows.clone(),
    })
}

/// Logistic regression by Newton-Raphson with step halving.
pub fn fit_logit(data: &Panel, spec: &ModelSpec) -> Result<FitResult> {
    let spec = ModelSpec {
        family: Family::Logit,
        ..spec.clone()
    };
    fit_binary(data, &spec, Link::Logit)
}

pub fn fit_probit(data: &Panel, spec: &ModelSpec) -> Result<FitResult> {
    let spec = ModelSpec {
        family: Family::Probit,
        ..spec.clone()
    };
    fit_binary(data, &spec, Link::Probit)
}

/// Ordinary least squares via the normal equations with one refinement pass.
pub fn fit_ols(data: &Panel, spec: &ModelSpec) -> Result<FitResult> {
    let spec = ModelSpec {
        family: Family::Linear,
        ..spec.clone()
    };
    let design = Design::build(data, &spec)?;
    design.check_rank()?;
    fit_ols_design(&design, &spec)
}

pub(crate) fn fit_ols_design(design: &Design, spec: &ModelSpec) -> Result<FitResult> {
    let xtx = design.x.tr_mul(&design.x);
    let chol = xtx
        .clone()
        .cholesky()
        .ok_or_else(|| Error::RankDeficient(design.names.last().cloned().unwrap_or_default()))?;
    let mut beta = chol.solve(&design.x.tr_mul(&design.y));
    let mut resid = &design.y - &design.x * &beta;
    beta += chol.solve(&design.x.tr_mul(&resid));
    resid = &design.y - &design.x * &beta;
    let bread = crate::econometrics::vcov::symmetrize(chol.inverse());
    let scores = score_rows(&design.x, resid.as_slice());
    let (vcov, vcov_kind) = sandwich(design, &bread, &scores)?;
    let xte = design.x.tr_mul(&resid);
    Ok(FitResult {
        spec: spec.clone(),
        names: design.names.clone(),
        coefficients: beta.iter().copied().collect(),
        std_errors: std_errors(&vcov),
        vcov,
        vcov_kind,
        log_likelihood: None,
        rss: Some(resid.norm_squared()),
        iterations: 1,
        converged: true,
        score_max_norm: xte.amax(),
        n_obs: design.nobs(),
        n_clusters: design.n_clusters,
        fe_levels: design.fe_levels.clone(),
        inverse_information: bread,
        rows: design.rows.clone(),
    })
}

/// Dispatches on `spec.family`.
pub fn fit(data: &Panel, spec: &ModelSpec) -> Result<FitResult> {
    match spec.family {
        Family::Logit => fit_logit(data, spec),
        Family::Probit => fit_probit(data, spec),
        Family::Linear => fit_ols(data, spec),
    }
}

/// Analytic log-likelihood gradient of a binary model at `beta`.
pub fn binary_score(data: &Panel, spec: &ModelSpec, beta: &[f64]) -> Result<Vec<f64>> {
    let (design, link) = binary_design(data, spec)?;
    let e = binary_eval(&design.x, &design.y, link, &DVector::from_column_slice(beta), true);
    Ok(e.derivs.expect("requested").0.iter().copied().collect())
}

/// Binary-model log-likelihood at `beta`.
pub fn binary_loglik(data: &Panel, spec: &ModelSpec, beta: &[f64]) -> Result<f64> {
    let (design, link) = binary_design(data, spec)?;
    Ok(binary_eval(&design.x, &design.y, link, &DVector::from_column_slice(beta), false).ll)
}

fn binary_design(data: &Panel, spec: &ModelSpec) -> Result<(Design, Link)> {
    let link = Link::of(spec.family).ok_or_else(|| Error::Spec("linear family has no binary likelihood".into()))?;
    let design = Design::build(data, spec)?;
    Ok((design, link))
}

impl FitResult {
    /// Fitted probabilities (or linear predictions) for the estimation rows.
    pub fn fitted(&self, data: &Panel) -> Result<Vec<f64>> {
        let design = Design::build_rows(data, &self.spec, &self.rows, Some(&self.fe_levels))?;
        let eta = &design.x * self.beta();
        Ok(match Link::of(self.spec.family) {
            Some(link) => eta.iter().map(|&e| link.prob(e)).collect(),
            None => eta.iter().copied().collect(),
        })
    }

    pub fn has_intercept(&self) -> bool {
        self.names.first().is_some_and(|n| n == INTERCEPT)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_by_two() -> Panel {
        let mut y = Vec::new();
        let mut x = Vec::new();
        for (xv, successes) in [(0.0, 30), (1.0, 60)] {
            for i in 0..100 {
                x.push(xv);
                y.push(if i < successes { 1.0 } else { 0.0 });
            }
        }
        let mut p = Panel::new();
        p.push_column("y", y).unwrap();
        p.push_column("x", x).unwrap();
        p
    }

    #[test]
    fn two_by_two_log_odds() {
        let fit = fit_logit(&two_by_two(), &ModelSpec::new("y", ["x"], Family::Logit)).unwrap();
        assert!((fit.coef("x").unwrap() - 3.5f64.ln()).abs() < 1e-10);
        assert!((fit.coef("const").unwrap() - (3.0f64 / 7.0).ln()).abs() < 1e-10);
        assert!(fit.score_max_norm <= 1e-8);
        // Probit: intercept Phi^-1(0.3), slope Phi^-1(0.6) - Phi^-1(0.3)
        let pr = fit_probit(&two_by_two(), &ModelSpec::new("y", ["x"], Family::Probit)).unwrap();
        let p0 = normal::cdf(pr.coef("const").unwrap());
        let p1 = normal::cdf(pr.coef("const").unwrap() + pr.coef("x").unwrap());
        assert!((p0 - 0.3).abs() < 1e-10 && (p1 - 0.6).abs() < 1e-10);
    }

    #[test]
    fn constant_response_is_separation() {
        let mut p = Panel::new();
        p.push_column("y", vec![1.0; 10]).unwrap();
        p.push_column("x", (0..10).map(f64::from).collect()).unwrap();
        let err = fit_logit(&p, &ModelSpec::new("y", ["x"], Family::Logit)).unwrap_err();
        assert!(matches!(err, Error::Separation(_)));
    }

    #[test]
    fn perfectly_separated_data() {
        let mut p = Panel::new();
        p.push_column("y", vec![0.0, 0.0, 0.0, 1.0, 1.0, 1.0]).unwrap();
        p.push_column("x", vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let err = fit_logit(&p, &ModelSpec::new("y", ["x"], Family::Logit)).unwrap_err();
        assert!(matches!(err, Error::Separation(_)), "{err}");
    }

    #[test]
    fn non_binary_response_rejected() {
        let mut p = Panel::new();
        p.push_column("y", vec![0.0, 2.0, 1.0]).unwrap();
        p.push_column("x", vec![1.0, 2.0, 3.0]).unwrap();
        assert!(matches!(
            fit_logit(&p, &ModelSpec::new("y", ["x"], Family::Logit)),
            Err(Error::Spec(_))
        ));
    }

    #[test]
    fn ols_exact_line() {
        let mut p = Panel::new();
        let x: Vec<f64> = (0..20).map(|i| i as f64 * 0.37 - 2.0).collect();
        p.push_column("y", x.iter().map(|v| 1.5 - 0.25 * v).collect()).unwrap();
        p.push_column("x", x).unwrap();
        let fit = fit_ols(&p, &ModelSpec::new("y", ["x"], Family::Linear)).unwrap();
        assert!((fit.coef("x").unwrap() + 0.25).abs() < 1e-13);
        assert!((fit.coef("const").unwrap() - 1.5).abs() < 1e-13);
        assert!(fit.rss.unwrap() < 1e-24);
    }

    #[test]
    fn ols_dummies_match_group_means() {
        // Two provinces, no regressor: const = mean of province 1,
        // dummy = difference of means.
        let mut p = Panel::new();
        p.push_column("y", vec![1.0, 2.0, 3.0, 10.0, 14.0]).unwrap();
        p.push_column("prov", vec![1.0, 1.0, 1.0, 2.0, 2.0]).unwrap();
        let spec = ModelSpec::new("y", Vec::<String>::new(), Family::Linear).with_fixed_effects(["prov"]);
        let fit = fit_ols(&p, &spec).unwrap();
        assert!((fit.coef("const").unwrap() - 2.0).abs() < 1e-12);
        assert!((fit.coef("prov=2").unwrap() - 10.0).abs() < 1e-12);
    }
}
