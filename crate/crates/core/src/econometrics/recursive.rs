//! Recursive two-equation system estimated by full-information maximum
//! likelihood with bivariate-normal errors.
//!
//! ```text
//! d* = Z gamma + u1          first stage (endogenous regressor d)
//! y* = X beta  + u2          outcome, y = 1[y* > 0], d is a column of X
//! corr(u1, u2) = rho = tanh(atanhrho)
//! ```
//!
//! With a linear first stage, `d = d*` and `u1 ~ N(0, sigma^2)`; the outcome
//! given `d` is probit with index `(X beta + rho e / sigma) / sqrt(1 - rho^2)`.
//! With a probit first stage, `d = 1[d* > 0]` and each observation
//! contributes a bivariate-normal quadrant probability.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::design::{complete_rows, Design, Family, FixedEffectLevels, ModelSpec};
use super::fit::{newton_maximize, std_errors, CoefRow, Eval, FitResult, NewtonSettings};
use super::glm::{fit_binary_design, fit_ols_design, score_rows, Link};
use super::normal::{self, bvn_cdf, bvn_pdf, two_sided_p};
use super::vcov::{cluster_robust_vcov, hc0_vcov, spd_inverse, VcovKind};
use crate::error::{Error, Result};
use crate::panel::Panel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FirstStage {
    /// Continuous or ordinal endogenous regressor with Gaussian error.
    #[default]
    Linear,
    /// Binary endogenous regressor.
    Probit,
}

impl FirstStage {
    fn of(family: Family) -> Result<Self> {
        match family {
            Family::Linear => Ok(FirstStage::Linear),
            Family::Probit => Ok(FirstStage::Probit),
            Family::Logit => Err(Error::Spec(
                "first stage must be linear or probit in the joint model".into(),
            )),
        }
    }
}

pub const LN_SIGMA: &str = "lnsig";
pub const ATANHRHO: &str = "atanhrho";

#[derive(Debug, Clone)]
pub struct RecursiveFit {
    pub first_stage: FirstStage,
    pub endogenous: String,
    pub instrument: String,
    pub first_names: Vec<String>,
    pub first_coefficients: Vec<f64>,
    pub first_std_errors: Vec<f64>,
    pub second_names: Vec<String>,
    pub second_coefficients: Vec<f64>,
    pub second_std_errors: Vec<f64>,
    pub ln_sigma: Option<f64>,
    pub ln_sigma_se: Option<f64>,
    pub atanhrho: f64,
    pub atanhrho_se: f64,
    pub rho: f64,
    pub log_likelihood: f64,
    /// Sum of the separately maximised equation log-likelihoods (rho = 0).
    pub independent_log_likelihood: f64,
    pub iterations: usize,
    pub converged: bool,
    pub score_max_norm: f64,
    pub n_obs: usize,
    pub n_clusters: usize,
    pub vcov_kind: VcovKind,
    /// Full parameter vector order: first stage, second stage, lnsig (linear
    /// first stage only), atanhrho.
    pub vcov: DMatrix<f64>,
    pub second_spec: ModelSpec,
    pub second_fe_levels: Vec<FixedEffectLevels>,
    pub rows: Vec<usize>,
}

impl RecursiveFit {
    fn lookup(names: &[String], values: &[f64], name: &str) -> Result<f64> {
        names
            .iter()
            .position(|n| n == name)
            .map(|i| values[i])
            .ok_or_else(|| Error::UnknownColumn(name.to_string()))
    }

    pub fn first_coef(&self, name: &str) -> Result<f64> {
        Self::lookup(&self.first_names, &self.first_coefficients, name)
    }

    pub fn first_se(&self, name: &str) -> Result<f64> {
        Self::lookup(&self.first_names, &self.first_std_errors, name)
    }

    pub fn second_coef(&self, name: &str) -> Result<f64> {
        Self::lookup(&self.second_names, &self.second_coefficients, name)
    }

    pub fn second_se(&self, name: &str) -> Result<f64> {
        Self::lookup(&self.second_names, &self.second_std_errors, name)
    }

    /// Wald statistic and two-sided p-value for `atanhrho = 0`.
    pub fn atanhrho_wald(&self) -> (f64, f64) {
        let z = self.atanhrho / self.atanhrho_se;
        (z, two_sided_p(z))
    }

    /// Rows labelled `first:<name>`, `second:<name>`, then the auxiliary
    /// parameters.
    pub fn coef_table(&self) -> Vec<CoefRow> {
        let mut out: Vec<CoefRow> = self
            .first_names
            .iter()
            .zip(self.first_coefficients.iter().zip(&self.first_std_errors))
            .map(|(n, (&b, &s))| CoefRow::new(format!("first:{n}"), b, s))
            .collect();
        out.extend(
            self.second_names
                .iter()
                .zip(self.second_coefficients.iter().zip(&self.second_std_errors))
                .map(|(n, (&b, &s))| CoefRow::new(format!("second:{n}"), b, s)),
        );
        if let (Some(b), Some(s)) = (self.ln_sigma, self.ln_sigma_se) {
            out.push(CoefRow::new(LN_SIGMA, b, s));
        }
        out.push(CoefRow::new(ATANHRHO, self.atanhrho, self.atanhrho_se));
        out
    }

    /// The outcome equation as a probit fit, for marginal effects.
    pub fn outcome_fit(&self) -> FitResult {
        let kz = self.first_names.len();
        let kx = self.second_names.len();
        let vcov = self.vcov.view((kz, kz), (kx, kx)).into_owned();
        FitResult {
            spec: ModelSpec {
                family: Family::Probit,
                ..self.second_spec.clone()
            },
            names: self.second_names.clone(),
            coefficients: self.second_coefficients.clone(),
            std_errors: self.second_std_errors.clone(),
            inverse_information: vcov.clone(),
            vcov,
            vcov_kind: self.vcov_kind,
            log_likelihood: None,
            rss: None,
            iterations: self.iterations,
            converged: self.converged,
            score_max_norm: self.score_max_norm,
            n_obs: self.n_obs,
            n_clusters: self.n_clusters,
            fe_levels: self.second_fe_levels.clone(),
            rows: self.rows.clone(),
        }
    }
}

/// Per-observation log-likelihood with derivatives in the local coordinates
/// `(Z gamma, X beta, extra parameters...)`.
struct RowDerivs {
    ll: f64,
    g: [f64; 4],
    h: [[f64; 4]; 4],
}

fn linear_row(d: f64, y: f64, zg: f64, xb: f64, ln_sigma: f64, theta: f64, want: bool) -> RowDerivs {
    let sigma = ln_sigma.exp();
    let (sh, ch) = (theta.sinh(), theta.cosh());
    let u = (d - zg) / sigma;
    let m = ch * xb + sh * u;
    let q = 2.0 * y - 1.0;
    let ll = -0.5 * (2.0 * std::f64::consts::PI).ln() - 0.5 * u * u - ln_sigma + normal::ln_cdf(q * m);
    let mut out = RowDerivs {
        ll,
        g: [0.0; 4],
        h: [[0.0; 4]; 4],
    };
    if !want {
        return out;
    }
    let lam = q * normal::mills(q * m);
    let w = lam * (lam + m);
    let dm = [-sh / sigma, ch, -sh * u, sh * xb + ch * u];
    let mut d2m = [[0.0; 4]; 4];
    d2m[0][2] = sh / sigma;
    d2m[0][3] = -ch / sigma;
    d2m[1][3] = sh;
    d2m[2][2] = sh * u;
    d2m[2][3] = -ch * u;
    d2m[3][3] = m;
    let gn = [u / sigma, 0.0, u * u - 1.0, 0.0];
    let mut hn = [[0.0; 4]; 4];
    hn[0][0] = -1.0 / (sigma * sigma);
    hn[0][2] = -2.0 * u / sigma;
    hn[2][2] = -2.0 * u * u;
    for i in 0..4 {
        out.g[i] = lam * dm[i] + gn[i];
        for j in i..4 {
            let v = -w * dm[i] * dm[j] + lam * d2m[i][j] + hn[i][j];
            out.h[i][j] = v;
            out.h[j][i] = v;
        }
    }
    out
}

fn probit_row(d: f64, y: f64, zg: f64, xb: f64, theta: f64, want: bool) -> RowDerivs {
    let q1 = 2.0 * d - 1.0;
    let q2 = 2.0 * y - 1.0;
    let rho = theta.tanh();
    let (a, b, r) = (q1 * zg, q2 * xb, q1 * q2 * rho);
    let p = bvn_cdf(a, b, r);
    let mut out = RowDerivs {
        ll: p.ln(),
        g: [0.0; 4],
        h: [[0.0; 4]; 4],
    };
    if !want || p <= 0.0 {
        return out;
    }
    let s2 = 1.0 - r * r;
    let s = s2.sqrt();
    let ua = (b - r * a) / s;
    let ub = (a - r * b) / s;
    let (pa_dens, pb_dens) = (normal::pdf(a), normal::pdf(b));
    let (cua, cub) = (normal::cdf(ua), normal::cdf(ub));
    let f2 = bvn_pdf(a, b, r);
    let pa = pa_dens * cua;
    let pb = pb_dens * cub;
    let pr = f2;
    let paa = -a * pa - r / s * pa_dens * normal::pdf(ua);
    let pbb = -b * pb - r / s * pb_dens * normal::pdf(ub);
    let pab = f2;
    let par = f2 * (r * b - a) / s2;
    let pbr = f2 * (r * a - b) / s2;
    let qf = a * a - 2.0 * r * a * b + b * b;
    let prr = f2 * (r / s2 + a * b / s2 - r * qf / (s2 * s2));
    let (la, lb, lr) = (pa / p, pb / p, pr / p);
    let laa = paa / p - la * la;
    let lbb = pbb / p - lb * lb;
    let lab = pab / p - la * lb;
    let lar = par / p - la * lr;
    let lbr = pbr / p - lb * lr;
    let lrr = prr / p - lr * lr;
    let dr = q1 * q2 * (1.0 - rho * rho);
    let d2r = -2.0 * rho * dr;
    out.g[0] = q1 * la;
    out.g[1] = q2 * lb;
    out.g[2] = dr * lr;
    out.h[0][0] = laa;
    out.h[1][1] = lbb;
    out.h[0][1] = q1 * q2 * lab;
    out.h[0][2] = q1 * dr * lar;
    out.h[1][2] = q2 * dr * lbr;
    out.h[2][2] = dr * dr * lrr + d2r * lr;
    out.h[1][0] = out.h[0][1];
    out.h[2][0] = out.h[0][2];
    out.h[2][1] = out.h[1][2];
    out
}

struct Joint {
    kind: FirstStage,
    z: DMatrix<f64>,
    x: DMatrix<f64>,
    d: DVector<f64>,
    y: DVector<f64>,
}

impl Joint {
    fn n_extra(&self) -> usize {
        match self.kind {
            FirstStage::Linear => 2,
            FirstStage::Probit => 1,
        }
    }

    fn n_params(&self) -> usize {
        self.z.ncols() + self.x.ncols() + self.n_extra()
    }

    fn rows(&self, p: &DVector<f64>, want: bool) -> Vec<RowDerivs> {
        let (kz, kx) = (self.z.ncols(), self.x.ncols());
        let zg = &self.z * p.rows(0, kz);
        let xb = &self.x * p.rows(kz, kx);
        let extra = &p.as_slice()[kz + kx..];
        (0..self.y.len())
            .map(|i| match self.kind {
                FirstStage::Linear => linear_row(self.d[i], self.y[i], zg[i], xb[i], extra[0], extra[1], want),
                FirstStage::Probit => {
                    if extra[0].abs() > 15.0 {
                        RowDerivs {
                            ll: f64::NEG_INFINITY,
                            g: [0.0; 4],
                            h: [[0.0; 4]; 4],
                        }
                    } else {
                        probit_row(self.d[i], self.y[i], zg[i], xb[i], extra[0], want)
                    }
                }
            })
            .collect()
    }

    fn eval(&self, p: &DVector<f64>, want: bool) -> Eval {
        let rows = self.rows(p, want);
        let ll = rows.iter().map(|r| r.ll).sum();
        if !want {
            return Eval { ll, derivs: None };
        }
        let (kz, kx, ne) = (self.z.ncols(), self.x.ncols(), self.n_extra());
        let np = self.n_params();
        let col = |k: usize| rows.iter().map(|r| r.g[k]).collect::<Vec<_>>();
        let hcol = |a: usize, b: usize| rows.iter().map(|r| r.h[a][b]).collect::<Vec<_>>();
        let mut grad = DVector::zeros(np);
        grad.rows_mut(0, kz).copy_from(&self.z.tr_mul(&DVector::from_vec(col(0))));
        grad.rows_mut(kz, kx).copy_from(&self.x.tr_mul(&DVector::from_vec(col(1))));
        for e in 0..ne {
            grad[kz + kx + e] = col(2 + e).iter().sum();
        }
        let mut h = DMatrix::zeros(np, np);
        h.view_mut((0, 0), (kz, kz)).copy_from(&score_rows(&self.z, &hcol(0, 0)).tr_mul(&self.z));
        h.view_mut((kz, kz), (kx, kx)).copy_from(&score_rows(&self.x, &hcol(1, 1)).tr_mul(&self.x));
        let zx = score_rows(&self.z, &hcol(0, 1)).tr_mul(&self.x);
        h.view_mut((0, kz), (kz, kx)).copy_from(&zx);
        h.view_mut((kz, 0), (kx, kz)).copy_from(&zx.transpose());
        for e in 0..ne {
            let c = kz + kx + e;
            let ze = self.z.tr_mul(&DVector::from_vec(hcol(0, 2 + e)));
            let xe = self.x.tr_mul(&DVector::from_vec(hcol(1, 2 + e)));
            for j in 0..kz {
                h[(j, c)] = ze[j];
                h[(c, j)] = ze[j];
            }
            for j in 0..kx {
                h[(kz + j, c)] = xe[j];
                h[(c, kz + j)] = xe[j];
            }
            for f in 0..ne {
                h[(c, kz + kx + f)] = hcol(2 + e, 2 + f).iter().sum();
            }
        }
        Eval {
            ll,
            derivs: Some((grad, -h)),
        }
    }

    /// Per-observation scores (n x params).
    fn scores(&self, p: &DVector<f64>) -> DMatrix<f64> {
        let rows = self.rows(p, true);
        let (kz, kx, ne) = (self.z.ncols(), self.x.ncols(), self.n_extra());
        let mut s = DMatrix::zeros(rows.len(), self.n_params());
        for (i, r) in rows.iter().enumerate() {
            for j in 0..kz {
                s[(i, j)] = r.g[0] * self.z[(i, j)];
            }
            for j in 0..kx {
                s[(i, kz + j)] = r.g[1] * self.x[(i, j)];
            }
            for e in 0..ne {
                s[(i, kz + kx + e)] = r.g[2 + e];
            }
        }
        s
    }
}

struct Prepared {
    joint: Joint,
    zd: Design,
    xd: Design,
    first: ModelSpec,
    second: ModelSpec,
    clusters: Option<Vec<usize>>,
    n_clusters: usize,
}

fn prepare(data: &Panel, spec_first: &ModelSpec, spec_second: &ModelSpec, instrument: &str) -> Result<Prepared> {
    let kind = FirstStage::of(spec_first.family)?;
    if spec_second.family == Family::Linear {
        return Err(Error::Spec("outcome equation must be binary".into()));
    }
    let second = ModelSpec {
        family: Family::Probit,
        ..spec_second.clone()
    };
    let mut first = spec_first.clone();
    if !first.regressors.iter().any(|r| r == instrument) {
        first.regressors.push(instrument.to_string());
    }
    if first.cluster.is_none() {
        first.cluster = second.cluster.clone();
    }
    first.validate()?;
    second.validate()?;
    let endogenous = &first.response;
    if !second.regressors.contains(endogenous) {
        return Err(Error::Spec(format!(
            "endogenous regressor `{endogenous}` must appear in the outcome equation"
        )));
    }
    if second.regressors.iter().any(|r| r == instrument) {
        return Err(Error::Spec(format!(
            "instrument `{instrument}` must be excluded from the outcome equation"
        )));
    }
    let mut cols: Vec<&str> = first.columns();
    for c in second.columns() {
        if !cols.contains(&c) {
            cols.push(c);
        }
    }
    let rows = complete_rows(data, &cols)?;
    let zd = Design::build_rows(data, &first, &rows, None)?;
    let xd = Design::build_rows(data, &second, &rows, None)?;
    zd.check_rank()?;
    xd.check_rank()?;
    if xd.y.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::Spec("outcome response is not binary".into()));
    }
    let ones = xd.y.iter().filter(|&&v| v == 1.0).count();
    if ones == 0 || ones == xd.nobs() {
        return Err(Error::Separation("outcome response is constant".into()));
    }
    if kind == FirstStage::Probit && zd.y.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::Spec("probit first stage needs a binary endogenous regressor".into()));
    }
    let (clusters, n_clusters) = match &second.cluster {
        Some(_) => (xd.clusters.clone(), xd.n_clusters),
        None => (None, xd.nobs()),
    };
    let joint = Joint {
        kind,
        z: zd.x.clone(),
        x: xd.x.clone(),
        d: zd.y.clone(),
        y: xd.y.clone(),
    };
    Ok(Prepared {
        joint,
        zd,
        xd,
        first,
        second,
        clusters,
        n_clusters,
    })
}

fn start_values(prep: &Prepared) -> Result<(DVector<f64>, f64)> {
    let j = &prep.joint;
    let (first_fit, first_ll) = match j.kind {
        FirstStage::Linear => {
            let f = fit_ols_design(&prep.zd, &prep.first)?;
            let n = prep.zd.nobs() as f64;
            let sigma2 = f.rss.expect("ols rss") / n;
            let ll = -0.5 * n * ((2.0 * std::f64::consts::PI * sigma2).ln() + 1.0);
            (f, ll)
        }
        FirstStage::Probit => {
            let f = fit_binary_design(&prep.zd, &prep.first, Link::Probit)?;
            let ll = f.log_likelihood.expect("probit loglik");
            (f, ll)
        }
    };
    let second_fit = fit_binary_design(&prep.xd, &prep.second, Link::Probit)?;
    let mut p = DVector::zeros(j.n_params());
    let kz = j.z.ncols();
    let kx = j.x.ncols();
    p.rows_mut(0, kz).copy_from_slice(&first_fit.coefficients);
    p.rows_mut(kz, kx).copy_from_slice(&second_fit.coefficients);
    if j.kind == FirstStage::Linear {
        let n = prep.zd.nobs() as f64;
        p[kz + kx] = 0.5 * (first_fit.rss.expect("ols rss") / n).ln();
    }
    Ok((p, first_ll + second_fit.log_likelihood.expect("probit loglik")))
}

fn param_names(prep: &Prepared) -> Vec<String> {
    let mut names: Vec<String> = prep.zd.names.iter().map(|n| format!("first:{n}")).collect();
    names.extend(prep.xd.names.iter().map(|n| format!("second:{n}")));
    if prep.joint.kind == FirstStage::Linear {
        names.push(LN_SIGMA.into());
    }
    names.push(ATANHRHO.into());
    names
}

/// Joint MLE of the recursive system. `spec_first.response` is the
/// endogenous regressor; `instrument` is added to the first stage if absent
/// and must not appear in `spec_second`. The first-stage family selects the
/// linear or probit case; clustering follows `spec_second.cluster`.
pub fn fit_recursive_joint(
    data: &Panel,
    spec_first: &ModelSpec,
    spec_second: &ModelSpec,
    instrument: &str,
) -> Result<RecursiveFit> {
    let prep = prepare(data, spec_first, spec_second, instrument)?;
    let (start, independent_ll) = start_values(&prep)?;
    let names = param_names(&prep);
    let settings = NewtonSettings {
        max_abs_coef: None,
        stall_is_separation: false,
        ..NewtonSettings::default()
    };
    let out = newton_maximize(start, &names, &settings, |p, want| prep.joint.eval(p, want))?;
    let bread = spd_inverse(&out.neg_hessian).ok_or_else(|| {
        Error::NoConvergence {
            iterations: out.iterations,
            score_norm: out.score_max_norm(),
        }
    })?;
    let scores = prep.joint.scores(&out.beta);
    let (vcov, vcov_kind) = match &prep.clusters {
        Some(ids) => (cluster_robust_vcov(&bread, &scores, ids)?, VcovKind::Cluster),
        None => (hc0_vcov(&bread, &scores)?, VcovKind::Hc0),
    };
    let se = std_errors(&vcov);
    let kz = prep.zd.ncols();
    let kx = prep.xd.ncols();
    let p = out.beta.as_slice();
    let last = p.len() - 1;
    let (ln_sigma, ln_sigma_se) = match prep.joint.kind {
        FirstStage::Linear => (Some(p[kz + kx]), Some(se[kz + kx])),
        FirstStage::Probit => (None, None),
    };
    Ok(RecursiveFit {
        first_stage: prep.joint.kind,
        endogenous: prep.first.response.clone(),
        instrument: instrument.to_string(),
        first_names: prep.zd.names.clone(),
        first_coefficients: p[..kz].to_vec(),
        first_std_errors: se[..kz].to_vec(),
        second_names: prep.xd.names.clone(),
        second_coefficients: p[kz..kz + kx].to_vec(),
        second_std_errors: se[kz..kz + kx].to_vec(),
        ln_sigma,
        ln_sigma_se,
        atanhrho: p[last],
        atanhrho_se: se[last],
        rho: p[last].tanh(),
        log_likelihood: out.ll,
        independent_log_likelihood: independent_ll,
        iterations: out.iterations,
        converged: true,
        score_max_norm: out.score_max_norm(),
        n_obs: prep.xd.nobs(),
        n_clusters: prep.n_clusters,
        vcov_kind,
        vcov,
        second_spec: prep.second.clone(),
        second_fe_levels: prep.xd.fe_levels.clone(),
        rows: prep.xd.rows.clone(),
    })
}
