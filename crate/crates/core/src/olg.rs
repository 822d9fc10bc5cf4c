//! Two-period overlapping-generations household with an optional three-pillar
//! pension.
//!
//! A young household splits after-tax wage income between livelihood
//! expenditure `E1` and savings `S`; when old it spends `E2 = S (1 + r)` plus any
//! pension payout. Utility is `ln E1 + ln E2 / (1 + rho)`. With pensions the
//! young also pay contributions `p` into three pillars returning `g` (the state
//! pillar additionally earns the subsidy rate `s`), and the old receive a lump
//! sum mandatory benefit `MB`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One value per pension pillar.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pillars {
    /// State social insurance.
    #[serde(default)]
    pub state: f64,
    /// Enterprise annuity.
    #[serde(default)]
    pub enterprise: f64,
    /// Individual commercial insurance.
    #[serde(default)]
    pub private: f64,
}

impl Pillars {
    pub fn new(state: f64, enterprise: f64, private: f64) -> Self {
        Pillars {
            state,
            enterprise,
            private,
        }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.state, self.enterprise, self.private]
    }

    pub fn sum(&self) -> f64 {
        self.state + self.enterprise + self.private
    }
}

/// Average annual return reported for the state pillar fund.
pub const STATE_PILLAR_RETURN: f64 = 0.0500;
/// Average annual return reported for the enterprise annuity pillar.
pub const ENTERPRISE_PILLAR_RETURN: f64 = 0.0626;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OlgParams {
    pub wage: f64,
    pub tax_rate: f64,
    pub time_preference: f64,
    pub interest_rate: f64,
    #[serde(default)]
    pub contributions: Pillars,
    #[serde(default)]
    pub returns: Pillars,
    #[serde(default)]
    pub subsidy: f64,
    #[serde(default)]
    pub mandatory_benefit: f64,
    /// Constant everyday consumption, taken out of first-period resources.
    #[serde(default)]
    pub everyday_consumption: f64,
}

impl OlgParams {
    /// A worked parameter set with 5.00% and 6.26% pillar returns and a 3% real rate.
    pub fn reference() -> Self {
        OlgParams {
            wage: 100.0,
            tax_rate: 0.2,
            time_preference: 0.05,
            interest_rate: 0.03,
            contributions: Pillars::new(5.0, 2.0, 0.0),
            returns: Pillars::new(STATE_PILLAR_RETURN, ENTERPRISE_PILLAR_RETURN, 0.0),
            subsidy: 0.01,
            mandatory_benefit: 2.0,
            everyday_consumption: 0.0,
        }
    }

    /// After-tax income net of everyday consumption, `W (1 - q) - E_C`.
    pub fn disposable_income(&self) -> f64 {
        self.wage * (1.0 - self.tax_rate) - self.everyday_consumption
    }

    /// Excess pension return over saving at `r`, plus the mandatory benefit:
    /// `(g_a + s - r) p_a + (g_b - r) p_b + (g_c - r) p_c + MB`.
    pub fn pension_excess_return(&self) -> f64 {
        let r = self.interest_rate;
        let p = self.contributions;
        let g = self.returns;
        (g.state + self.subsidy - r) * p.state
            + (g.enterprise - r) * p.enterprise
            + (g.private - r) * p.private
            + self.mandatory_benefit
    }

    /// Second-period payout of all pillars plus the mandatory benefit.
    pub fn pension_payout(&self) -> f64 {
        let p = self.contributions;
        let g = self.returns;
        (1.0 + g.state + self.subsidy) * p.state
            + (1.0 + g.enterprise) * p.enterprise
            + (1.0 + g.private) * p.private
            + self.mandatory_benefit
    }

    fn validate(&self, mode: PensionMode) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if !(self.wage > 0.0 && self.wage.is_finite()) {
            return bad(format!("wage {} must be positive", self.wage));
        }
        if !(0.0..1.0).contains(&self.tax_rate) {
            return bad(format!("tax rate {} outside [0, 1)", self.tax_rate));
        }
        if !(self.time_preference > -1.0) {
            return bad(format!("time preference {} must exceed -1", self.time_preference));
        }
        if !(self.interest_rate > -1.0) {
            return bad(format!("interest rate {} must exceed -1", self.interest_rate));
        }
        if self.everyday_consumption < 0.0 {
            return bad("everyday consumption must be non-negative".into());
        }
        if mode == PensionMode::WithPension {
            if self.contributions.as_array().iter().any(|&p| p < 0.0) {
                return bad("pillar contributions must be non-negative".into());
            }
            if self.contributions.as_array().iter().all(|&p| p == 0.0) {
                return bad("pension participation requires a non-zero contribution to some pillar".into());
            }
            if self.mandatory_benefit < 0.0 {
                return bad("mandatory benefit must be non-negative".into());
            }
        }
        let resources = self.first_period_resources(mode);
        if !(resources > 0.0) {
            return bad(format!("first-period resources {resources} must be positive"));
        }
        Ok(())
    }

    fn first_period_resources(&self, mode: PensionMode) -> f64 {
        match mode {
            PensionMode::NoPension => self.disposable_income(),
            PensionMode::WithPension => self.disposable_income() - self.contributions.sum(),
        }
    }

    fn second_period_transfer(&self, mode: PensionMode) -> f64 {
        match mode {
            PensionMode::NoPension => 0.0,
            PensionMode::WithPension => self.pension_payout(),
        }
    }

    pub fn utility(&self, e1: f64, e2: f64) -> f64 {
        e1.ln() + e2.ln() / (1.0 + self.time_preference)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PensionMode {
    NoPension,
    WithPension,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OlgSolution {
    /// First-period livelihood expenditure.
    pub e1: f64,
    /// Second-period expenditure.
    pub e2: f64,
    pub savings: f64,
    pub utility: f64,
}

impl OlgSolution {
    fn from_savings(params: &OlgParams, mode: PensionMode, savings: f64) -> Self {
        let e1 = params.first_period_resources(mode) - savings;
        let e2 = savings * (1.0 + params.interest_rate) + params.second_period_transfer(mode);
        OlgSolution {
            e1,
            e2,
            savings,
            utility: params.utility(e1, e2),
        }
    }
}

fn check_interior(sol: OlgSolution) -> Result<OlgSolution> {
    if !(sol.e1 > 0.0) {
        return Err(Error::Infeasible(format!("first-period expenditure {} is not positive", sol.e1)));
    }
    if !(sol.savings > 0.0) {
        return Err(Error::Infeasible(format!("optimal savings {} are not positive", sol.savings)));
    }
    if !(sol.e2 > 0.0) {
        return Err(Error::Infeasible(format!("second-period expenditure {} is not positive", sol.e2)));
    }
    Ok(sol)
}

/// Closed form without pensions: `E1 = W (1 - q) (1 + rho) / (2 + rho)`.
pub fn solve_no_tpps(params: &OlgParams) -> Result<OlgSolution> {
    params.validate(PensionMode::NoPension)?;
    let rho = params.time_preference;
    let e1 = params.disposable_income() * (1.0 + rho) / (2.0 + rho);
    let savings = params.disposable_income() - e1;
    check_interior(OlgSolution::from_savings(params, PensionMode::NoPension, savings))
}

/// Closed form with pensions:
/// `E1 = W (1 - q)(1 + rho)/(2 + rho) + (1 + rho) X / ((2 + rho)(1 + r))`
/// where `X` is [`OlgParams::pension_excess_return`].
pub fn solve_with_tpps(params: &OlgParams) -> Result<OlgSolution> {
    params.validate(PensionMode::WithPension)?;
    let rho = params.time_preference;
    let r = params.interest_rate;
    let e1 = params.disposable_income() * (1.0 + rho) / (2.0 + rho)
        + (1.0 + rho) * params.pension_excess_return() / ((2.0 + rho) * (1.0 + r));
    let savings = params.first_period_resources(PensionMode::WithPension) - e1;
    check_interior(OlgSolution::from_savings(params, PensionMode::WithPension, savings))
}

pub fn solve(params: &OlgParams, mode: PensionMode) -> Result<OlgSolution> {
    match mode {
        PensionMode::NoPension => solve_no_tpps(params),
        PensionMode::WithPension => solve_with_tpps(params),
    }
}

/// Relative change in first-period expenditure from joining the pension system:
/// `X / (W (1 - q)(1 + r))`.
pub fn expenditure_uplift(params: &OlgParams) -> Result<f64> {
    params.validate(PensionMode::WithPension)?;
    Ok(params.pension_excess_return() / (params.disposable_income() * (1.0 + params.interest_rate)))
}

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Golden-section maximisation of utility over savings on the open feasible
/// interval where both periods' expenditure is positive.
pub fn numeric_oracle(params: &OlgParams, mode: PensionMode) -> Result<OlgSolution> {
    params.validate(mode)?;
    let resources = params.first_period_resources(mode);
    let transfer = params.second_period_transfer(mode);
    let lo = -transfer / (1.0 + params.interest_rate);
    let hi = resources;
    if !(hi > lo) {
        return Err(Error::Infeasible("empty feasible savings interval".into()));
    }
    let f = |s: f64| OlgSolution::from_savings(params, mode, s).utility;
    let tol = 1e-10 * (hi - lo).max(1.0);
    let (mut a, mut b) = (lo, hi);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > tol {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    Ok(OlgSolution::from_savings(params, mode, 0.5 * (a + b)))
}

/// `MP = F(E1)` for a caller-supplied strictly decreasing `F`.
pub fn poverty_index<F: Fn(f64) -> f64>(solution: &OlgSolution, link: F) -> f64 {
    link(solution.e1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    Wage,
    TaxRate,
    TimePreference,
    InterestRate,
    Subsidy,
    MandatoryBenefit,
    ReturnState,
    ReturnEnterprise,
    ReturnPrivate,
    ContributionState,
    ContributionEnterprise,
    ContributionPrivate,
}

impl SweepParameter {
    pub fn apply(self, params: &mut OlgParams, value: f64) {
        match self {
            SweepParameter::Wage => params.wage = value,
            SweepParameter::TaxRate => params.tax_rate = value,
            SweepParameter::TimePreference => params.time_preference = value,
            SweepParameter::InterestRate => params.interest_rate = value,
            SweepParameter::Subsidy => params.subsidy = value,
            SweepParameter::MandatoryBenefit => params.mandatory_benefit = value,
            SweepParameter::ReturnState => params.returns.state = value,
            SweepParameter::ReturnEnterprise => params.returns.enterprise = value,
            SweepParameter::ReturnPrivate => params.returns.private = value,
            SweepParameter::ContributionState => params.contributions.state = value,
            SweepParameter::ContributionEnterprise => params.contributions.enterprise = value,
            SweepParameter::ContributionPrivate => params.contributions.private = value,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Trend {
    StrictlyIncreasing,
    StrictlyDecreasing,
    Constant,
    Mixed,
}

impl Trend {
    pub fn of(values: &[f64]) -> Trend {
        let diffs: Vec<f64> = values.windows(2).map(|w| w[1] - w[0]).collect();
        if diffs.iter().all(|&d| d > 0.0) {
            Trend::StrictlyIncreasing
        } else if diffs.iter().all(|&d| d < 0.0) {
            Trend::StrictlyDecreasing
        } else if diffs.iter().all(|&d| d == 0.0) {
            Trend::Constant
        } else {
            Trend::Mixed
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StaticsRow {
    pub value: f64,
    pub e1_without: f64,
    pub e1_with: f64,
    pub e2_with: f64,
    pub savings_with: f64,
    pub uplift: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StaticsTable {
    pub parameter: SweepParameter,
    pub rows: Vec<StaticsRow>,
    pub e1_trend: Trend,
    pub uplift_trend: Trend,
}

/// Solves the model at each sweep value and reports the direction of change.
pub fn comparative_statics(params: &OlgParams, sweep: &Sweep) -> Result<StaticsTable> {
    if sweep.values.is_empty() {
        return Err(Error::Empty("sweep grid".into()));
    }
    let rows = sweep
        .values
        .iter()
        .map(|&v| {
            let mut p = *params;
            sweep.parameter.apply(&mut p, v);
            let without = solve_no_tpps(&p)?;
            let with = solve_with_tpps(&p)?;
            Ok(StaticsRow {
                value: v,
                e1_without: without.e1,
                e1_with: with.e1,
                e2_with: with.e2,
                savings_with: with.savings,
                uplift: expenditure_uplift(&p)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let e1: Vec<f64> = rows.iter().map(|r| r.e1_with).collect();
    let up: Vec<f64> = rows.iter().map(|r| r.uplift).collect();
    Ok(StaticsTable {
        parameter: sweep.parameter,
        e1_trend: Trend::of(&e1),
        uplift_trend: Trend::of(&up),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> OlgParams {
        OlgParams {
            wage: 100.0,
            tax_rate: 0.2,
            time_preference: 0.05,
            interest_rate: 0.03,
            contributions: Pillars::new(5.0, 0.0, 0.0),
            returns: Pillars::new(0.05, 0.0, 0.0),
            subsidy: 0.01,
            mandatory_benefit: 2.0,
            everyday_consumption: 0.0,
        }
    }

    #[test]
    fn symmetric_split() {
        let p = OlgParams {
            wage: 1.0,
            tax_rate: 0.0,
            time_preference: 0.0,
            interest_rate: 0.0,
            ..base()
        };
        let s = solve_no_tpps(&p).unwrap();
        assert_eq!((s.e1, s.savings), (0.5, 0.5));
        let o = numeric_oracle(&p, PensionMode::NoPension).unwrap();
        assert!((o.e1 - 0.5).abs() < 1e-9 && (o.savings - 0.5).abs() < 1e-9);
    }

    #[test]
    fn no_pension_worked_value() {
        let s = solve_no_tpps(&base()).unwrap();
        // 80 * 1.05 / 2.05
        assert!((s.e1 - 40.975_609_756_097_56).abs() < 1e-12);
        assert!((s.e2 - s.savings * 1.03).abs() < 1e-12);
        let o = numeric_oracle(&base(), PensionMode::NoPension).unwrap();
        assert!((o.e1 - s.e1).abs() <= 1e-6 * s.e1);
    }

    #[test]
    fn impatience_limit() {
        let p = OlgParams {
            time_preference: 1e9,
            ..base()
        };
        let s = solve_no_tpps(&p).unwrap();
        assert!((s.e1 - 80.0).abs() < 1e-6);
    }

    #[test]
    fn with_pension_worked_value() {
        let s = solve_with_tpps(&base()).unwrap();
        let expected = 80.0 * 1.05 / 2.05 + 1.05 * 2.15 / (2.05 * 1.03);
        assert!((s.e1 - expected).abs() < 1e-12);
        assert!((s.e1 - 42.044_755).abs() < 1e-6);
        // Budget identities.
        assert!((s.e1 + s.savings - (80.0 - 5.0)).abs() < 1e-10);
        assert!((s.e2 - (s.savings * 1.03 + 1.06 * 5.0 + 2.0)).abs() < 1e-10);
        let o = numeric_oracle(&base(), PensionMode::WithPension).unwrap();
        assert!((o.e1 - s.e1).abs() <= 1e-6 * s.e1);
    }

    #[test]
    fn uplift_identity_and_value() {
        let p = base();
        let u = expenditure_uplift(&p).unwrap();
        assert!((u - 2.15 / 82.4).abs() < 1e-15);
        let e_star = solve_no_tpps(&p).unwrap().e1;
        let e_2star = solve_with_tpps(&p).unwrap().e1;
        assert!(((e_2star - e_star) / e_star - u).abs() < 1e-10);
    }

    #[test]
    fn arbitrage_free_case() {
        let p = OlgParams {
            subsidy: 0.0,
            mandatory_benefit: 0.0,
            returns: Pillars::new(0.03, 0.0, 0.0),
            ..base()
        };
        assert_eq!(expenditure_uplift(&p).unwrap(), 0.0);
        let q = OlgParams {
            returns: Pillars::new(0.02, 0.0, 0.0),
            mandatory_benefit: 0.0,
            ..base()
        };
        let with = solve_with_tpps(&q).unwrap().e1;
        let without = solve_no_tpps(&q).unwrap().e1;
        assert!((with - without).abs() < 1e-12);
    }

    #[test]
    fn preconditions() {
        let none = OlgParams {
            contributions: Pillars::default(),
            mandatory_benefit: 0.0,
            ..base()
        };
        assert!(matches!(solve_with_tpps(&none), Err(Error::InvalidParameter(_))));
        assert!(solve_no_tpps(&none).is_ok());
        let broke = OlgParams {
            contributions: Pillars::new(90.0, 0.0, 0.0),
            ..base()
        };
        assert!(solve_with_tpps(&broke).is_err());
        let bad_rho = OlgParams {
            time_preference: -1.0,
            ..base()
        };
        assert!(solve_no_tpps(&bad_rho).is_err());
    }

    #[test]
    fn corner_is_reported() {
        // A pension payout this large pushes optimal savings below zero.
        let p = OlgParams {
            mandatory_benefit: 500.0,
            ..base()
        };
        assert!(matches!(solve_with_tpps(&p), Err(Error::Infeasible(_))));
        // The oracle still finds the interior optimum with negative savings.
        let o = numeric_oracle(&p, PensionMode::WithPension).unwrap();
        assert!(o.savings < 0.0);
    }

    #[test]
    fn statics() {
        let p = base();
        let r = p.interest_rate;
        let t = comparative_statics(
            &p,
            &Sweep {
                parameter: SweepParameter::ReturnState,
                values: vec![r, r + 0.01, r + 0.02],
            },
        )
        .unwrap();
        assert_eq!(t.uplift_trend, Trend::StrictlyIncreasing);

        let t = comparative_statics(
            &p,
            &Sweep {
                parameter: SweepParameter::Wage,
                values: vec![50.0, 100.0, 200.0],
            },
        )
        .unwrap();
        assert_eq!(t.uplift_trend, Trend::StrictlyDecreasing);
        let u: Vec<f64> = t.rows.iter().map(|r| r.uplift).collect();
        assert!((u[0] / u[2] - 4.0).abs() < 1e-12 && (u[1] / u[2] - 2.0).abs() < 1e-12);

        let t = comparative_statics(
            &p,
            &Sweep {
                parameter: SweepParameter::ContributionEnterprise,
                values: vec![0.0, 2.0],
            },
        );
        // Enterprise return 0 < r: adding that pillar lowers E1.
        assert_eq!(t.unwrap().e1_trend, Trend::StrictlyDecreasing);
        let mut q = p;
        q.returns.enterprise = ENTERPRISE_PILLAR_RETURN;
        let t = comparative_statics(
            &q,
            &Sweep {
                parameter: SweepParameter::ContributionEnterprise,
                values: vec![0.0, 2.0],
            },
        )
        .unwrap();
        assert_eq!(t.e1_trend, Trend::StrictlyIncreasing);
    }

    #[test]
    fn first_order_condition() {
        let s = solve_with_tpps(&base()).unwrap();
        let ratio = s.e2 / s.e1;
        assert!((ratio - 1.03 / 1.05).abs() < 1e-8);
    }

    #[test]
    fn decreasing_link() {
        let lo = solve_no_tpps(&base()).unwrap();
        let hi = solve_with_tpps(&base()).unwrap();
        assert!(hi.e1 > lo.e1);
        let f = |e: f64| (-e / 50.0).exp();
        assert!(poverty_index(&hi, f) < poverty_index(&lo, f));
    }
}
