//! Synthetic household panels with known parameters.
//!
//! Layout: household `i` lives in district `i % n_districts`, district `d`
//! in province `d % n_provinces`. Waves are `first_wave + wave_step * t`.
//!
//! Pillar participation, for pillar `k` in wave `t`:
//!
//! ```text
//! p*_itk = alpha_k + delta_k t + kappa_k e_dk + g_k x1_it + u_itk,   TPPS_k = 1[p* > 0]
//! ```
//!
//! with district exposure `e_dk ~ N(0, 1)`, so district adoption shares
//! differ and a lagged-share instrument has power. The outcome is
//!
//! ```text
//! y*_it = b0 + beta T_it + c1 x1_it + c2 urban_i + eta_p + tau_t + eps_it,   IFMP = 1[y* > 0]
//! ```
//!
//! where `T` is the pillar count or one pillar. Each error is
//! `sqrt(c) a_i + sqrt(1 - c) w_it` with a household component (`c` is the
//! cluster correlation), and `corr(u_itk, z_it) = rho` where `z` is the
//! Gaussian outcome error. Logistic outcome errors are `Lambda^-1(Phi(z))`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::econometrics::normal;
use crate::error::{Error, Result};
use crate::mpi::columns as mpi_cols;
use crate::panel::{Panel, PanelKeys};

pub const HOUSEHOLD: &str = "hh";
pub const WAVE: &str = "wave";
pub const PROVINCE: &str = "province";
pub const DISTRICT: &str = "district";
pub const CONTROL: &str = "x1";
pub const URBAN: &str = "urban";
pub const HOUSEHOLD_SIZE: &str = "hh_size";
pub const OUTCOME: &str = "IFMP";
pub const PARTICIPATION: &str = "TPPS";
pub const PILLARS: [&str; 3] = ["TPPS1", "TPPS2", "TPPS3"];
pub const PILLAR_ERRORS: [&str; 3] = ["err_TPPS1", "err_TPPS2", "err_TPPS3"];
pub const OUTCOME_ERROR: &str = "err_IFMP";
pub const LIVELIHOOD: [&str; 13] = [
    "H1", "H2", "S1", "S2", "S3", "PH1", "PH2", "F1", "F2", "N1", "N2", "PS1", "PS2",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorDist {
    #[default]
    Gaussian,
    Logistic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Treatment {
    /// Number of pillars joined, 0 to 3.
    #[default]
    Count,
    /// A single pillar dummy, 1 to 3.
    Pillar(usize),
}

impl Treatment {
    pub fn column(&self) -> &'static str {
        match self {
            Treatment::Count => PARTICIPATION,
            Treatment::Pillar(k) => PILLARS[k - 1],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OutcomeConfig {
    pub intercept: f64,
    pub beta: f64,
    pub control: f64,
    pub urban: f64,
    pub province_sd: f64,
    pub wave_sd: f64,
    pub error: ErrorDist,
    pub treatment: Treatment,
}

impl Default for OutcomeConfig {
    fn default() -> Self {
        Self {
            intercept: 0.2,
            beta: -0.5,
            control: -0.4,
            urban: -0.3,
            province_sd: 0.3,
            wave_sd: 0.2,
            error: ErrorDist::Gaussian,
            treatment: Treatment::Count,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ParticipationConfig {
    pub intercept: [f64; 3],
    pub trend: [f64; 3],
    pub exposure: [f64; 3],
    pub control: [f64; 3],
}

impl Default for ParticipationConfig {
    fn default() -> Self {
        Self {
            intercept: [0.3, -1.0, -0.7],
            trend: [0.12, 0.1, 0.15],
            exposure: [0.8, 0.8, 0.8],
            control: [0.2, 0.2, 0.2],
        }
    }
}

/// Deprivation base rates by dimension; indicator columns are generated
/// when present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DeprivationRates {
    pub education: f64,
    pub health: f64,
    pub living_standards: f64,
    pub income: f64,
    /// Loading of every indicator on a common latent poverty factor, in [0, 1).
    pub correlation: f64,
}

impl Default for DeprivationRates {
    fn default() -> Self {
        Self {
            education: 0.35,
            health: 0.25,
            living_standards: 0.3,
            income: 0.2,
            correlation: 0.6,
        }
    }
}

impl DeprivationRates {
    fn per_indicator(&self) -> [f64; 12] {
        let (e, h, l) = (self.education, self.health, self.living_standards);
        [e, e, h, h, h, h, l, l, l, l, l, self.income]
    }
}

fn d_households() -> usize {
    2000
}
fn d_waves() -> usize {
    5
}
fn d_first_wave() -> i64 {
    2012
}
fn d_wave_step() -> i64 {
    2
}
fn d_provinces() -> usize {
    10
}
fn d_districts() -> usize {
    50
}
fn d_cluster() -> f64 {
    0.3
}
fn d_some_rates() -> Option<DeprivationRates> {
    Some(DeprivationRates::default())
}
fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgpConfig {
    #[serde(default = "d_households")]
    pub n_households: usize,
    #[serde(default = "d_waves")]
    pub waves: usize,
    #[serde(default = "d_first_wave")]
    pub first_wave: i64,
    #[serde(default = "d_wave_step")]
    pub wave_step: i64,
    #[serde(default = "d_provinces")]
    pub n_provinces: usize,
    #[serde(default = "d_districts")]
    pub n_districts: usize,
    #[serde(default)]
    pub outcome: OutcomeConfig,
    #[serde(default)]
    pub participation: ParticipationConfig,
    /// Correlation between pillar and outcome latent errors.
    #[serde(default)]
    pub rho: f64,
    /// Share of each latent error's variance that is household-persistent.
    #[serde(default = "d_cluster")]
    pub cluster_corr: f64,
    /// Probability that a household is missing from the last wave.
    #[serde(default)]
    pub attrition: f64,
    #[serde(default = "d_some_rates")]
    pub deprivation: Option<DeprivationRates>,
    #[serde(default = "yes")]
    pub livelihood: bool,
    pub seed: u64,
}

impl DgpConfig {
    pub fn new(seed: u64) -> Self {
        Self {
            n_households: d_households(),
            waves: d_waves(),
            first_wave: d_first_wave(),
            wave_step: d_wave_step(),
            n_provinces: d_provinces(),
            n_districts: d_districts(),
            outcome: OutcomeConfig::default(),
            participation: ParticipationConfig::default(),
            rho: 0.0,
            cluster_corr: d_cluster(),
            attrition: 0.0,
            deprivation: d_some_rates(),
            livelihood: true,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.n_households == 0 || self.waves == 0 || self.n_provinces == 0 || self.n_districts == 0 {
            return bad("households, waves, provinces and districts must be positive".into());
        }
        if self.n_districts > self.n_households {
            return bad(format!(
                "{} districts for {} households",
                self.n_districts, self.n_households
            ));
        }
        if self.n_provinces > self.n_districts {
            return bad(format!(
                "{} provinces for {} districts",
                self.n_provinces, self.n_districts
            ));
        }
        if !(self.rho > -1.0 && self.rho < 1.0) {
            return bad(format!("rho must lie in (-1, 1), got {}", self.rho));
        }
        if !(0.0..1.0).contains(&self.cluster_corr) {
            return bad(format!("cluster correlation must lie in [0, 1), got {}", self.cluster_corr));
        }
        if !(0.0..1.0).contains(&self.attrition) {
            return bad(format!("attrition must lie in [0, 1), got {}", self.attrition));
        }
        if let Treatment::Pillar(k) = self.outcome.treatment {
            if !(1..=3).contains(&k) {
                return bad(format!("pillar must be 1, 2 or 3, got {k}"));
            }
        }
        if self.outcome.province_sd < 0.0 || self.outcome.wave_sd < 0.0 {
            return bad("effect standard deviations must be non-negative".into());
        }
        if let Some(r) = &self.deprivation {
            for p in r.per_indicator() {
                if !(0.0..=1.0).contains(&p) {
                    return bad(format!("deprivation rate {p} outside [0, 1]"));
                }
            }
            if !(0.0..1.0).contains(&r.correlation) {
                return bad(format!("deprivation correlation must lie in [0, 1), got {}", r.correlation));
            }
        }
        Ok(())
    }
}

/// Parameters drawn during generation, written alongside the panel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthTruth {
    pub config: DgpConfig,
    pub treatment_column: String,
    pub province_effects: Vec<f64>,
    pub wave_effects: Vec<f64>,
    pub district_exposure: Vec<[f64; 3]>,
    pub rows: usize,
}

#[derive(Debug, Clone)]
pub struct SynthPanel {
    pub panel: Panel,
    pub truth: SynthTruth,
}

fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn logistic_quantile(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Gaussian -> logistic by matching quantiles.
fn to_logistic(z: f64) -> f64 {
    if z < 0.0 {
        logistic_quantile(normal::cdf(z))
    } else {
        -logistic_quantile(normal::cdf(-z))
    }
}

fn std_normal() -> Normal {
    Normal::standard()
}

/// Draws a raw indicator value consistent with its deprivation status.
fn indicator_value(column: &str, deprived: bool, rng: &mut ChaCha8Rng) -> f64 {
    let flag = |d: bool| f64::from(u8::from(d));
    match column {
        mpi_cols::EDU_YEARS => {
            if deprived {
                rng.random_range(0..9) as f64
            } else {
                rng.random_range(9..17) as f64
            }
        }
        mpi_cols::HOUSING_AREA_PC => band(deprived, 3.0, mpi_cols::HOUSING_AREA_CUTOFF, 60.0, rng),
        mpi_cols::DURABLE_VALUE => band(deprived, 0.0, mpi_cols::DURABLE_VALUE_CUTOFF, 20000.0, rng),
        mpi_cols::INCOME_PC => band(deprived, 300.0, mpi_cols::INCOME_PC_CUTOFF, 30000.0, rng),
        _ => flag(deprived),
    }
}

/// Uniform below the cutoff when deprived, otherwise at or above it.
fn band(deprived: bool, lo: f64, cutoff: f64, hi: f64, rng: &mut ChaCha8Rng) -> f64 {
    let v = if deprived {
        rng.random_range(lo..cutoff)
    } else {
        rng.random_range(cutoff..hi)
    };
    (v * 100.0).round() / 100.0
}

fn round4(v: f64) -> f64 {
    (v * 1e4).round() / 1e4
}

pub fn generate_panel(config: &DgpConfig) -> Result<SynthPanel> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n = config.n_households;
    let oc = &config.outcome;
    let pc = &config.participation;
    let sc = config.cluster_corr.sqrt();
    let sw = (1.0 - config.cluster_corr).sqrt();
    let rho = config.rho;
    let rho_c = (1.0 - rho * rho).sqrt();
    let quantile = |p: f64| {
        if p <= 0.0 {
            f64::NEG_INFINITY
        } else if p >= 1.0 {
            f64::INFINITY
        } else {
            std_normal().inverse_cdf(p)
        }
    };

    let province_effects: Vec<f64> = (0..config.n_provinces).map(|_| oc.province_sd * gauss(&mut rng)).collect();
    let wave_effects: Vec<f64> = (0..config.waves).map(|_| oc.wave_sd * gauss(&mut rng)).collect();
    let district_exposure: Vec<[f64; 3]> = (0..config.n_districts)
        .map(|_| [gauss(&mut rng), gauss(&mut rng), gauss(&mut rng)])
        .collect();

    struct Household {
        x1_mean: f64,
        urban: f64,
        size: f64,
        a_out: f64,
        a_pillar: [f64; 3],
        poverty: f64,
        present_last: bool,
    }
    let households: Vec<Household> = (0..n)
        .map(|_| Household {
            x1_mean: gauss(&mut rng),
            urban: f64::from(u8::from(rng.random_bool(0.4))),
            size: rng.random_range(1..=6) as f64,
            a_out: gauss(&mut rng),
            a_pillar: [gauss(&mut rng), gauss(&mut rng), gauss(&mut rng)],
            poverty: gauss(&mut rng),
            present_last: !rng.random_bool(config.attrition),
        })
        .collect();

    let mut cols: Vec<(&str, Vec<f64>)> = Vec::new();
    let push = |cols: &mut Vec<(&str, Vec<f64>)>, name: &'static str, v: f64| {
        if let Some(c) = cols.iter_mut().find(|(n, _)| *n == name) {
            c.1.push(v);
        } else {
            cols.push((name, vec![v]));
        }
    };
    let rates = config.deprivation.as_ref().map(|r| (r.per_indicator().map(quantile), r.correlation));

    for t in 0..config.waves {
        let wave = config.first_wave + config.wave_step * t as i64;
        for (i, h) in households.iter().enumerate() {
            if t + 1 == config.waves && config.waves > 1 && !h.present_last {
                continue;
            }
            let district = i % config.n_districts;
            let province = district % config.n_provinces;
            let x1 = round4(0.8 * h.x1_mean + 0.6 * gauss(&mut rng));
            let z_out = sc * h.a_out + sw * gauss(&mut rng);
            let mut pillars = [0.0; 3];
            let mut u = [0.0; 3];
            for k in 0..3 {
                let nu = sc * h.a_pillar[k] + sw * gauss(&mut rng);
                u[k] = rho * z_out + rho_c * nu;
                let latent = pc.intercept[k]
                    + pc.trend[k] * t as f64
                    + pc.exposure[k] * district_exposure[district][k]
                    + pc.control[k] * x1
                    + u[k];
                pillars[k] = f64::from(u8::from(latent > 0.0));
            }
            let count: f64 = pillars.iter().sum();
            let treat = match oc.treatment {
                Treatment::Count => count,
                Treatment::Pillar(k) => pillars[k - 1],
            };
            let eps = match oc.error {
                ErrorDist::Gaussian => z_out,
                ErrorDist::Logistic => to_logistic(z_out),
            };
            let ystar = oc.intercept
                + oc.beta * treat
                + oc.control * x1
                + oc.urban * h.urban
                + province_effects[province]
                + wave_effects[t]
                + eps;

            push(&mut cols, HOUSEHOLD, (i + 1) as f64);
            push(&mut cols, WAVE, wave as f64);
            push(&mut cols, PROVINCE, (province + 1) as f64);
            push(&mut cols, DISTRICT, (district + 1) as f64);
            push(&mut cols, CONTROL, x1);
            push(&mut cols, URBAN, h.urban);
            push(&mut cols, HOUSEHOLD_SIZE, h.size);
            for k in 0..3 {
                push(&mut cols, PILLARS[k], pillars[k]);
            }
            push(&mut cols, PARTICIPATION, count);
            push(&mut cols, OUTCOME, f64::from(u8::from(ystar > 0.0)));
            for k in 0..3 {
                push(&mut cols, PILLAR_ERRORS[k], u[k]);
            }
            push(&mut cols, OUTCOME_ERROR, eps);

            if let Some((thresholds, lambda)) = &rates {
                let lc = (1.0 - lambda * lambda).sqrt();
                let latent = 0.8 * h.poverty - 0.6 * x1;
                for (j, col) in mpi_cols::ALL.iter().enumerate() {
                    let score = lambda * latent + lc * gauss(&mut rng);
                    let deprived = score < thresholds[j];
                    push(&mut cols, col, indicator_value(col, deprived, &mut rng));
                }
            }
            if config.livelihood {
                for (j, col) in LIVELIHOOD.iter().enumerate() {
                    let load = 0.2 + 0.05 * j as f64;
                    let v = (load * x1 - 0.2 * h.poverty + 0.5 * gauss(&mut rng)).exp() * (1.0 + j as f64);
                    push(&mut cols, col, round4(v));
                }
            }
        }
    }

    let mut panel = Panel::new();
    let rows = cols.first().map_or(0, |c| c.1.len());
    for (name, values) in cols {
        panel.push_column(name, values)?;
    }
    let panel = panel.with_keys(PanelKeys::new(HOUSEHOLD, WAVE))?;
    Ok(SynthPanel {
        panel,
        truth: SynthTruth {
            config: config.clone(),
            treatment_column: oc.treatment.column().to_string(),
            province_effects,
            wave_effects,
            district_exposure,
            rows,
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MpiGroup {
    pub label: String,
    pub share: f64,
    /// Deprivation probability per indicator, in `mpi::columns::ALL` order.
    pub rates: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MpiProfile {
    pub n_households: usize,
    pub groups: Vec<MpiGroup>,
}

pub const GROUP: &str = "group";

impl MpiProfile {
    /// One group with independent indicators at the given rates.
    pub fn independent(n_households: usize, rates: [f64; 12]) -> Self {
        Self {
            n_households,
            groups: vec![MpiGroup {
                label: "all".into(),
                share: 1.0,
                rates: rates.to_vec(),
            }],
        }
    }

    pub fn uniform(n_households: usize, rate: f64) -> Self {
        Self::independent(n_households, [rate; 12])
    }

    fn validate(&self) -> Result<()> {
        if self.n_households == 0 || self.groups.is_empty() {
            return Err(Error::InvalidParameter("profile needs households and at least one group".into()));
        }
        let total: f64 = self.groups.iter().map(|g| g.share).sum();
        if (total - 1.0).abs() > 1e-9 || self.groups.iter().any(|g| !(0.0..=1.0).contains(&g.share)) {
            return Err(Error::InvalidParameter(format!("group shares must be in [0, 1] and sum to 1, got {total}")));
        }
        for g in &self.groups {
            if g.rates.len() != mpi_cols::ALL.len() {
                return Err(Error::InvalidParameter(format!(
                    "group `{}` has {} rates, expected {}",
                    g.label,
                    g.rates.len(),
                    mpi_cols::ALL.len()
                )));
            }
            if let Some(p) = g.rates.iter().find(|p| !(0.0..=1.0).contains(*p)) {
                return Err(Error::InvalidParameter(format!("invalid probability {p} in group `{}`", g.label)));
            }
        }
        Ok(())
    }

    /// Household counts per group by largest remainder.
    pub fn group_sizes(&self) -> Vec<usize> {
        let n = self.n_households as f64;
        let mut sizes: Vec<usize> = self.groups.iter().map(|g| (g.share * n).floor() as usize).collect();
        let mut rema: Vec<(usize, f64)> = self
            .groups
            .iter()
            .enumerate()
            .map(|(i, g)| (i, g.share * n - sizes[i] as f64))
            .collect();
        rema.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        let short = self.n_households - sizes.iter().sum::<usize>();
        for (i, _) in rema.into_iter().take(short) {
            sizes[i] += 1;
        }
        sizes
    }
}

/// Single-wave household sample with independent indicator draws; group
/// `g` (0-based, in profile order) is written to the `group` column.
pub fn generate_mpi_sample(profile: &MpiProfile, seed: u64) -> Result<Panel> {
    profile.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = mpi_cols::ALL.len();
    let n = profile.n_households;
    let mut hh = Vec::with_capacity(n);
    let mut group = Vec::with_capacity(n);
    let mut values: Vec<Vec<f64>> = vec![Vec::with_capacity(n); d];
    for (g, size) in profile.group_sizes().into_iter().enumerate() {
        let rates = &profile.groups[g].rates;
        for _ in 0..size {
            hh.push((hh.len() + 1) as f64);
            group.push(g as f64);
            for (j, col) in mpi_cols::ALL.iter().enumerate() {
                let deprived = rng.random_bool(rates[j]);
                values[j].push(indicator_value(col, deprived, &mut rng));
            }
        }
    }
    let mut panel = Panel::new();
    panel.push_column(HOUSEHOLD, hh)?;
    panel.push_column(WAVE, vec![2012.0; n])?;
    panel.push_column(GROUP, group)?;
    for (col, v) in mpi_cols::ALL.iter().zip(values) {
        panel.push_column(*col, v)?;
    }
    panel.with_keys(PanelKeys::new(HOUSEHOLD, WAVE))
}
