//! Alkire-Foster dual-cutoff poverty measurement.
//!
//! Indicator values are first compared with their deprivation cutoffs to give a
//! binary deprivation matrix. Each household's weighted deprivation score is then
//! compared with the cross-dimensional cutoff `k` to identify the poor, and the
//! adjusted headcount `M0 = H * A` is built from the censored scores.
//!
//! Weights are exact rationals. Scores are carried as integer multiples of
//! `1 / L`, where `L` is the least common multiple of the weight denominators,
//! so identification and the contribution shares are computed without
//! floating-point accumulation error.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::Panel;

/// Exact indicator weight in `(0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Weight(Ratio<i64>);

impl Weight {
    pub fn new(numer: i64, denom: i64) -> Result<Self> {
        if denom == 0 {
            return Err(Error::InvalidScheme("weight has a zero denominator".into()));
        }
        let r = Ratio::new(numer, denom);
        if r <= Ratio::from_integer(0) || r > Ratio::from_integer(1) {
            return Err(Error::InvalidScheme(format!("weight {r} outside (0, 1]")));
        }
        Ok(Weight(r))
    }

    pub fn ratio(&self) -> Ratio<i64> {
        self.0
    }

    pub fn to_f64(&self) -> f64 {
        *self.0.numer() as f64 / *self.0.denom() as f64
    }
}

impl fmt::Display for Weight {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl FromStr for Weight {
    type Err = Error;

    /// Accepts `"1/12"`, `"1"` or a terminating decimal such as `"0.25"`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::InvalidScheme(format!("cannot parse weight `{s}`"));
        if let Some((int, frac)) = s.split_once('.') {
            if frac.is_empty() || frac.len() > 12 || !frac.bytes().all(|b| b.is_ascii_digit()) {
                return Err(bad());
            }
            let int: i64 = if int.is_empty() { 0 } else { int.parse().map_err(|_| bad())? };
            let denom = 10_i64.pow(frac.len() as u32);
            let frac: i64 = frac.parse().map_err(|_| bad())?;
            return Weight::new(int * denom + frac, denom);
        }
        let r: Ratio<i64> = s.parse().map_err(|_| bad())?;
        Weight::new(*r.numer(), *r.denom())
    }
}

impl Serialize for Weight {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Weight {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dimension {
    Education,
    Health,
    LivingStandards,
    Income,
    Custom(String),
}

impl Dimension {
    pub fn name(&self) -> &str {
        match self {
            Dimension::Education => "education",
            Dimension::Health => "health",
            Dimension::LivingStandards => "living_standards",
            Dimension::Income => "income",
            Dimension::Custom(s) => s,
        }
    }

    pub fn parse(s: &str) -> Dimension {
        match s {
            "education" => Dimension::Education,
            "health" => Dimension::Health,
            "living_standards" => Dimension::LivingStandards,
            "income" => Dimension::Income,
            other => Dimension::Custom(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    /// Deprived when `value < cutoff` (strict).
    DeprivedIfBelow,
    /// Raw value is a 0/1 flag; deprived when it equals 1.
    DeprivedIfFlagSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndicatorSpec {
    pub id: String,
    pub column: String,
    pub dimension: Dimension,
    pub weight: Weight,
    #[serde(default)]
    pub cutoff: f64,
    pub orientation: Orientation,
}

impl IndicatorSpec {
    pub fn below(id: &str, dimension: Dimension, weight: Weight, cutoff: f64) -> Self {
        IndicatorSpec {
            id: id.into(),
            column: id.into(),
            dimension,
            weight,
            cutoff,
            orientation: Orientation::DeprivedIfBelow,
        }
    }

    pub fn flag(id: &str, dimension: Dimension, weight: Weight) -> Self {
        IndicatorSpec {
            id: id.into(),
            column: id.into(),
            dimension,
            weight,
            cutoff: 1.0,
            orientation: Orientation::DeprivedIfFlagSet,
        }
    }
}

/// Column names shared by the built-in schemes and the synthetic generators.
pub mod columns {
    pub const EDU_YEARS: &str = "edu_years";
    pub const SCHOOL_DROPOUT: &str = "school_dropout";
    pub const BMI_ABNORMAL: &str = "bmi_abnormal";
    pub const HOSPITALISED: &str = "hospitalised";
    pub const POOR_HEALTH: &str = "poor_health";
    pub const UNINSURED: &str = "uninsured";
    pub const UNCLEAN_FUEL: &str = "unclean_fuel";
    pub const NO_SAFE_WATER: &str = "no_safe_water";
    pub const HOUSING_AREA_PC: &str = "housing_area_pc";
    pub const NO_ELECTRICITY: &str = "no_electricity";
    pub const DURABLE_VALUE: &str = "durable_value";
    pub const INCOME_PC: &str = "income_pc";

    /// All twelve indicator columns in with-income scheme order.
    pub const ALL: [&str; 12] = [
        EDU_YEARS,
        SCHOOL_DROPOUT,
        BMI_ABNORMAL,
        HOSPITALISED,
        POOR_HEALTH,
        UNINSURED,
        UNCLEAN_FUEL,
        NO_SAFE_WATER,
        HOUSING_AREA_PC,
        NO_ELECTRICITY,
        DURABLE_VALUE,
        INCOME_PC,
    ];

    pub const EDU_YEARS_CUTOFF: f64 = 9.0;
    pub const HOUSING_AREA_CUTOFF: f64 = 12.0;
    pub const DURABLE_VALUE_CUTOFF: f64 = 1000.0;
    pub const INCOME_PC_CUTOFF: f64 = 2300.0;
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IndicatorScheme {
    name: String,
    indicators: Vec<IndicatorSpec>,
    poverty_cutoff_k: f64,
    #[serde(skip)]
    denom: i64,
    #[serde(skip)]
    units: Vec<i64>,
}

pub const DEFAULT_K: f64 = 0.33;

fn lcm(a: i64, b: i64) -> i64 {
    fn gcd(mut a: i64, mut b: i64) -> i64 {
        while b != 0 {
            (a, b) = (b, a % b);
        }
        a
    }
    a / gcd(a, b) * b
}

fn check_k(k: f64) -> Result<()> {
    if !(k > 0.0 && k <= 1.0) {
        return Err(Error::InvalidParameter(format!("poverty cutoff k = {k} outside (0, 1]")));
    }
    Ok(())
}

impl IndicatorScheme {
    pub fn new(name: impl Into<String>, indicators: Vec<IndicatorSpec>, k: f64) -> Result<Self> {
        if indicators.is_empty() {
            return Err(Error::InvalidScheme("scheme has no indicators".into()));
        }
        check_k(k)?;
        let mut ids = HashSet::new();
        for ind in &indicators {
            if !ids.insert(ind.id.as_str()) {
                return Err(Error::InvalidScheme(format!("duplicate indicator id `{}`", ind.id)));
            }
        }
        let total: Ratio<i64> = indicators.iter().map(|i| i.weight.ratio()).sum();
        if total != Ratio::from_integer(1) {
            return Err(Error::InvalidScheme(format!("weights sum to {total}, not 1")));
        }
        let denom = indicators
            .iter()
            .fold(1, |acc, i| lcm(acc, *i.weight.ratio().denom()));
        let units = indicators
            .iter()
            .map(|i| {
                let r = i.weight.ratio();
                r.numer() * (denom / r.denom())
            })
            .collect();
        Ok(IndicatorScheme {
            name: name.into(),
            indicators,
            poverty_cutoff_k: k,
            denom,
            units,
        })
    }

    /// Education 1/6 x2, health 1/12 x4, living standards 1/15 x5.
    pub fn baseline() -> Self {
        use columns::*;
        let w = |n, d| Weight::new(n, d).unwrap();
        let inds = vec![
            IndicatorSpec::below(EDU_YEARS, Dimension::Education, w(1, 6), EDU_YEARS_CUTOFF),
            IndicatorSpec::flag(SCHOOL_DROPOUT, Dimension::Education, w(1, 6)),
            IndicatorSpec::flag(BMI_ABNORMAL, Dimension::Health, w(1, 12)),
            IndicatorSpec::flag(HOSPITALISED, Dimension::Health, w(1, 12)),
            IndicatorSpec::flag(POOR_HEALTH, Dimension::Health, w(1, 12)),
            IndicatorSpec::flag(UNINSURED, Dimension::Health, w(1, 12)),
            IndicatorSpec::flag(UNCLEAN_FUEL, Dimension::LivingStandards, w(1, 15)),
            IndicatorSpec::flag(NO_SAFE_WATER, Dimension::LivingStandards, w(1, 15)),
            IndicatorSpec::below(
                HOUSING_AREA_PC,
                Dimension::LivingStandards,
                w(1, 15),
                HOUSING_AREA_CUTOFF,
            ),
            IndicatorSpec::flag(NO_ELECTRICITY, Dimension::LivingStandards, w(1, 15)),
            IndicatorSpec::below(
                DURABLE_VALUE,
                Dimension::LivingStandards,
                w(1, 15),
                DURABLE_VALUE_CUTOFF,
            ),
        ];
        IndicatorScheme::new("baseline", inds, DEFAULT_K).expect("baseline scheme is valid")
    }

    /// Education 1/8 x2, health 1/16 x4, living standards 1/20 x5, income 1/4.
    pub fn with_income() -> Self {
        use columns::*;
        let w = |n, d| Weight::new(n, d).unwrap();
        let mut inds = Self::baseline().indicators;
        for ind in &mut inds {
            ind.weight = match ind.dimension {
                Dimension::Education => w(1, 8),
                Dimension::Health => w(1, 16),
                _ => w(1, 20),
            };
        }
        inds.push(IndicatorSpec::below(
            INCOME_PC,
            Dimension::Income,
            w(1, 4),
            INCOME_PC_CUTOFF,
        ));
        IndicatorScheme::new("with_income", inds, DEFAULT_K).expect("with-income scheme is valid")
    }

    pub fn builtin(name: &str) -> Option<Self> {
        match name {
            "baseline" => Some(Self::baseline()),
            "with_income" => Some(Self::with_income()),
            _ => None,
        }
    }

    pub fn with_k(mut self, k: f64) -> Result<Self> {
        check_k(k)?;
        self.poverty_cutoff_k = k;
        Ok(self)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn indicators(&self) -> &[IndicatorSpec] {
        &self.indicators
    }

    pub fn len(&self) -> usize {
        self.indicators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indicators.is_empty()
    }

    pub fn poverty_cutoff(&self) -> f64 {
        self.poverty_cutoff_k
    }

    pub fn weights(&self) -> Vec<f64> {
        self.indicators.iter().map(|i| i.weight.to_f64()).collect()
    }

    /// Dimensions in order of first appearance.
    pub fn dimensions(&self) -> Vec<&Dimension> {
        let mut out: Vec<&Dimension> = Vec::new();
        for ind in &self.indicators {
            if !out.contains(&&ind.dimension) {
                out.push(&ind.dimension);
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissingPolicy {
    /// Drop any row with a missing indicator value and report the count.
    #[default]
    Listwise,
    /// Missing values count as not deprived.
    Nondeprived,
    /// Missing values are an error.
    Strict,
}

#[derive(Debug, Clone, Default)]
pub struct EvalOptions {
    pub missing: MissingPolicy,
    /// Panel column whose values become subgroup labels (e.g. an urban flag).
    pub group_column: Option<String>,
}

/// Binary household-by-indicator deprivation matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DeprivationMatrix {
    n: usize,
    d: usize,
    cells: Vec<u8>,
    /// (entity, time) per row when the source panel carries keys.
    pub household_keys: Option<Vec<(i64, i64)>>,
    pub group_labels: Option<Vec<String>>,
    /// Row of the source panel each matrix row came from.
    pub source_rows: Vec<usize>,
    /// Rows removed under the listwise missing-value policy.
    pub dropped_missing: usize,
}

impl DeprivationMatrix {
    pub fn from_rows(rows: &[Vec<u8>]) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        let mut cells = Vec::with_capacity(rows.len() * d);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != d {
                return Err(Error::DimensionMismatch(format!(
                    "row {i} has {} cells, expected {d}",
                    row.len()
                )));
            }
            if let Some(&bad) = row.iter().find(|&&c| c > 1) {
                return Err(Error::DimensionMismatch(format!("cell value {bad} is not 0/1")));
            }
            cells.extend_from_slice(row);
        }
        Ok(DeprivationMatrix {
            n: rows.len(),
            d,
            cells,
            household_keys: None,
            group_labels: None,
            source_rows: (0..rows.len()).collect(),
            dropped_missing: 0,
        })
    }

    pub fn with_group_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.n {
            return Err(Error::DimensionMismatch(format!(
                "{} group labels for {} rows",
                labels.len(),
                self.n
            )));
        }
        self.group_labels = Some(labels);
        Ok(self)
    }

    pub fn nrows(&self) -> usize {
        self.n
    }

    pub fn ncols(&self) -> usize {
        self.d
    }

    pub fn row(&self, i: usize) -> &[u8] {
        &self.cells[i * self.d..(i + 1) * self.d]
    }

    pub fn get(&self, i: usize, j: usize) -> u8 {
        self.cells[i * self.d + j]
    }

    pub fn set(&mut self, i: usize, j: usize, value: bool) {
        self.cells[i * self.d + j] = u8::from(value);
    }

    pub fn select_rows(&self, rows: &[usize]) -> DeprivationMatrix {
        let mut cells = Vec::with_capacity(rows.len() * self.d);
        for &r in rows {
            cells.extend_from_slice(self.row(r));
        }
        DeprivationMatrix {
            n: rows.len(),
            d: self.d,
            cells,
            household_keys: self
                .household_keys
                .as_ref()
                .map(|k| rows.iter().map(|&r| k[r]).collect()),
            group_labels: self
                .group_labels
                .as_ref()
                .map(|g| rows.iter().map(|&r| g[r].clone()).collect()),
            source_rows: rows.iter().map(|&r| self.source_rows[r]).collect(),
            dropped_missing: 0,
        }
    }
}

fn format_label(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        v.to_string()
    }
}

/// Deprivation matrix under the default (listwise) missing-value policy.
pub fn evaluate_deprivations(panel: &Panel, scheme: &IndicatorScheme) -> Result<DeprivationMatrix> {
    evaluate_deprivations_with(panel, scheme, &EvalOptions::default())
}

pub fn evaluate_deprivations_with(
    panel: &Panel,
    scheme: &IndicatorScheme,
    opts: &EvalOptions,
) -> Result<DeprivationMatrix> {
    let cols = scheme
        .indicators
        .iter()
        .map(|ind| panel.column(&ind.column))
        .collect::<Result<Vec<_>>>()?;
    let groups = opts
        .group_column
        .as_deref()
        .map(|g| panel.column(g))
        .transpose()?;
    let keys = match panel.keys() {
        Some(k) => Some((panel.column(&k.entity)?, panel.column(&k.time)?)),
        None => None,
    };

    let d = scheme.len();
    let mut cells = Vec::with_capacity(panel.nrows() * d);
    let mut source_rows = Vec::with_capacity(panel.nrows());
    let mut dropped = 0;
    let mut row_cells = vec![0u8; d];
    'rows: for r in 0..panel.nrows() {
        for (j, (ind, col)) in scheme.indicators.iter().zip(&cols).enumerate() {
            let v = col[r];
            if v.is_nan() {
                match opts.missing {
                    MissingPolicy::Listwise => {
                        dropped += 1;
                        continue 'rows;
                    }
                    MissingPolicy::Nondeprived => {
                        row_cells[j] = 0;
                        continue;
                    }
                    MissingPolicy::Strict => {
                        return Err(Error::MissingValue {
                            column: ind.column.clone(),
                            row: r,
                        })
                    }
                }
            }
            row_cells[j] = match ind.orientation {
                Orientation::DeprivedIfBelow => u8::from(v < ind.cutoff),
                Orientation::DeprivedIfFlagSet => {
                    if v == 1.0 {
                        1
                    } else if v == 0.0 {
                        0
                    } else {
                        return Err(Error::NonBinaryFlag {
                            indicator: ind.id.clone(),
                            row: r,
                            value: v,
                        });
                    }
                }
            };
        }
        if let Some(g) = groups {
            if g[r].is_nan() {
                return Err(Error::MissingValue {
                    column: opts.group_column.clone().unwrap_or_default(),
                    row: r,
                });
            }
        }
        cells.extend_from_slice(&row_cells);
        source_rows.push(r);
    }

    Ok(DeprivationMatrix {
        n: source_rows.len(),
        d,
        cells,
        household_keys: keys.map(|(e, t)| {
            source_rows
                .iter()
                .map(|&r| (e[r] as i64, t[r] as i64))
                .collect()
        }),
        group_labels: groups.map(|g| source_rows.iter().map(|&r| format_label(g[r])).collect()),
        source_rows,
        dropped_missing: dropped,
    })
}

fn check_alignment(matrix: &DeprivationMatrix, scheme: &IndicatorScheme) -> Result<()> {
    if matrix.d != scheme.len() {
        return Err(Error::DimensionMismatch(format!(
            "matrix has {} indicator columns, scheme has {}",
            matrix.d,
            scheme.len()
        )));
    }
    Ok(())
}

/// Scores as integer multiples of `1 / scheme.denom`.
fn score_units(matrix: &DeprivationMatrix, scheme: &IndicatorScheme) -> Vec<i64> {
    (0..matrix.n)
        .map(|i| {
            matrix
                .row(i)
                .iter()
                .zip(&scheme.units)
                .map(|(&g, &u)| i64::from(g) * u)
                .sum()
        })
        .collect()
}

/// Weighted deprivation score `D_i = sum_j g_ij w_j` for every row.
pub fn deprivation_scores(matrix: &DeprivationMatrix, scheme: &IndicatorScheme) -> Result<Vec<f64>> {
    check_alignment(matrix, scheme)?;
    let l = scheme.denom as f64;
    Ok(score_units(matrix, scheme)
        .into_iter()
        .map(|u| u as f64 / l)
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Contribution {
    pub name: String,
    pub share: f64,
}

/// Shares of `M0` attributable to each indicator and each dimension.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Contributions {
    pub indicators: Vec<Contribution>,
    pub dimensions: Vec<Contribution>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MpiResult {
    pub k: f64,
    pub n: usize,
    /// Number of poor households.
    pub q: usize,
    pub h: f64,
    pub a: f64,
    pub m0: f64,
    /// Per-indicator count of poor households deprived in that indicator.
    pub censored_headcounts: Vec<usize>,
    /// `None` when `M0 = 0`.
    pub contributions: Option<Contributions>,
    #[serde(skip)]
    poor_units: i64,
}

impl MpiResult {
    /// `M0_j = q_j w_j / n` per indicator.
    pub fn indicator_m0(&self, scheme: &IndicatorScheme) -> Vec<f64> {
        self.censored_headcounts
            .iter()
            .zip(scheme.weights())
            .map(|(&q, w)| q as f64 * w / self.n as f64)
            .collect()
    }
}

fn aggregate(
    matrix: &DeprivationMatrix,
    scheme: &IndicatorScheme,
    units: &[i64],
    k: f64,
) -> MpiResult {
    let l = scheme.denom as f64;
    let mut q = 0usize;
    let mut poor_units = 0i64;
    let mut censored = vec![0usize; matrix.d];
    for (i, &u) in units.iter().enumerate() {
        if u as f64 / l >= k {
            q += 1;
            poor_units += u;
            for (c, &g) in censored.iter_mut().zip(matrix.row(i)) {
                *c += usize::from(g);
            }
        }
    }
    let n = matrix.n;
    let h = q as f64 / n as f64;
    let a = if q == 0 { 0.0 } else { poor_units as f64 / (l * q as f64) };
    let m0 = poor_units as f64 / (l * n as f64);
    let mut result = MpiResult {
        k,
        n,
        q,
        h,
        a,
        m0,
        censored_headcounts: censored,
        contributions: None,
        poor_units,
    };
    result.contributions = contributions_of(&result, scheme).ok();
    result
}

fn contributions_of(result: &MpiResult, scheme: &IndicatorScheme) -> Result<Contributions> {
    if result.poor_units == 0 {
        return Err(Error::ZeroAdjustedHeadcount);
    }
    // C_j = q_j w_j / (n M0) = q_j units_j / sum of poor units
    let total = result.poor_units as f64;
    let indicators: Vec<Contribution> = scheme
        .indicators
        .iter()
        .zip(&scheme.units)
        .zip(&result.censored_headcounts)
        .map(|((ind, &u), &qj)| Contribution {
            name: ind.id.clone(),
            share: (qj as i64 * u) as f64 / total,
        })
        .collect();
    let dimensions = scheme
        .dimensions()
        .into_iter()
        .map(|dim| {
            let units: i64 = scheme
                .indicators
                .iter()
                .zip(&scheme.units)
                .zip(&result.censored_headcounts)
                .filter(|((ind, _), _)| &ind.dimension == dim)
                .map(|((_, &u), &qj)| qj as i64 * u)
                .sum();
            Contribution {
                name: dim.name().to_string(),
                share: units as f64 / total,
            }
        })
        .collect();
    Ok(Contributions {
        indicators,
        dimensions,
    })
}

/// Identification at cutoff `k` (poor iff `D_i >= k`) and aggregation.
pub fn compute_mpi(matrix: &DeprivationMatrix, scheme: &IndicatorScheme, k: f64) -> Result<MpiResult> {
    check_alignment(matrix, scheme)?;
    check_k(k)?;
    if matrix.n == 0 {
        return Err(Error::Empty("deprivation matrix has no rows".into()));
    }
    let units = score_units(matrix, scheme);
    Ok(aggregate(matrix, scheme, &units, k))
}

/// Per-indicator and per-dimension contribution shares. Errors when `M0 = 0`.
pub fn dimensional_contributions(result: &MpiResult, scheme: &IndicatorScheme) -> Result<Contributions> {
    if result.censored_headcounts.len() != scheme.len() {
        return Err(Error::DimensionMismatch(
            "result and scheme have different indicator counts".into(),
        ));
    }
    contributions_of(result, scheme)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupMpi {
    pub label: String,
    pub n: usize,
    pub population_share: f64,
    pub result: MpiResult,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubgroupDecomposition {
    pub total: MpiResult,
    /// Groups sorted by label.
    pub groups: Vec<GroupMpi>,
}

impl SubgroupDecomposition {
    /// `sum_g (n_g / n) M0_g`, which equals the total `M0`.
    pub fn share_weighted_m0(&self) -> f64 {
        self.groups
            .iter()
            .map(|g| g.population_share * g.result.m0)
            .sum()
    }
}

pub fn subgroup_decompose(
    matrix: &DeprivationMatrix,
    scheme: &IndicatorScheme,
    k: f64,
    group_labels: &[String],
) -> Result<SubgroupDecomposition> {
    if group_labels.len() != matrix.n {
        return Err(Error::DimensionMismatch(format!(
            "{} group labels for {} rows",
            group_labels.len(),
            matrix.n
        )));
    }
    let total = compute_mpi(matrix, scheme, k)?;
    let mut members: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, label) in group_labels.iter().enumerate() {
        members.entry(label.as_str()).or_default().push(i);
    }
    let groups = members
        .into_iter()
        .map(|(label, rows)| {
            let sub = matrix.select_rows(&rows);
            Ok(GroupMpi {
                label: label.to_string(),
                n: rows.len(),
                population_share: rows.len() as f64 / matrix.n as f64,
                result: compute_mpi(&sub, scheme, k)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SubgroupDecomposition { total, groups })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurvePoint {
    pub k: f64,
    pub h: f64,
    pub a: f64,
    pub m0: f64,
}

/// `H(k)` and `M0(k)` over a strictly increasing grid in `(0, 1]`.
pub fn incidence_curve(
    matrix: &DeprivationMatrix,
    scheme: &IndicatorScheme,
    k_grid: &[f64],
) -> Result<Vec<CurvePoint>> {
    check_alignment(matrix, scheme)?;
    if k_grid.is_empty() {
        return Err(Error::Empty("k grid".into()));
    }
    if matrix.n == 0 {
        return Err(Error::Empty("deprivation matrix has no rows".into()));
    }
    for &k in k_grid {
        check_k(k)?;
    }
    if k_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter("k grid must be strictly increasing".into()));
    }
    let units = score_units(matrix, scheme);
    Ok(k_grid
        .iter()
        .map(|&k| {
            let r = aggregate(matrix, scheme, &units, k);
            CurvePoint {
                k,
                h: r.h,
                a: r.a,
                m0: r.m0,
            }
        })
        .collect())
}

/// Evenly spaced grid `step, 2 step, ..., 1`.
pub fn k_grid(step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0 && step <= 1.0) {
        return Err(Error::InvalidParameter(format!("grid step {step} outside (0, 1]")));
    }
    let count = (1.0 / step).round() as usize;
    Ok((1..=count).map(|i| (i as f64 * step).min(1.0)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_equal() -> IndicatorScheme {
        let w = Weight::new(1, 2).unwrap();
        IndicatorScheme::new(
            "toy",
            vec![
                IndicatorSpec::flag("a", Dimension::Education, w),
                IndicatorSpec::flag("b", Dimension::Health, w),
            ],
            0.5,
        )
        .unwrap()
    }

    fn four_households() -> DeprivationMatrix {
        DeprivationMatrix::from_rows(&[vec![1, 1], vec![1, 0], vec![0, 0], vec![1, 0]]).unwrap()
    }

    #[test]
    fn builtin_weights() {
        let b = IndicatorScheme::baseline();
        let w: Vec<String> = b.indicators().iter().map(|i| i.weight.to_string()).collect();
        assert_eq!(
            w,
            ["1/6", "1/6", "1/12", "1/12", "1/12", "1/12", "1/15", "1/15", "1/15", "1/15", "1/15"]
        );
        let wi = IndicatorScheme::with_income();
        let w: Vec<String> = wi.indicators().iter().map(|i| i.weight.to_string()).collect();
        assert_eq!(
            w,
            ["1/8", "1/8", "1/16", "1/16", "1/16", "1/16", "1/20", "1/20", "1/20", "1/20", "1/20", "1/4"]
        );
        assert_eq!(b.poverty_cutoff(), 0.33);
        assert_eq!(b.dimensions().len(), 3);
        assert_eq!(wi.dimensions().len(), 4);
    }

    #[test]
    fn scheme_validation() {
        let half = Weight::new(1, 2).unwrap();
        let third = Weight::new(1, 3).unwrap();
        let bad_sum = IndicatorScheme::new(
            "x",
            vec![
                IndicatorSpec::flag("a", Dimension::Health, half),
                IndicatorSpec::flag("b", Dimension::Health, third),
            ],
            0.3,
        );
        assert!(matches!(bad_sum, Err(Error::InvalidScheme(_))));
        let dup = IndicatorScheme::new(
            "x",
            vec![
                IndicatorSpec::flag("a", Dimension::Health, half),
                IndicatorSpec::flag("a", Dimension::Health, half),
            ],
            0.3,
        );
        assert!(matches!(dup, Err(Error::InvalidScheme(_))));
        assert!(Weight::new(0, 3).is_err());
        assert!(two_equal().with_k(0.0).is_err());
    }

    #[test]
    fn weight_parsing() {
        assert_eq!("1/12".parse::<Weight>().unwrap(), Weight::new(1, 12).unwrap());
        assert_eq!("0.25".parse::<Weight>().unwrap(), Weight::new(1, 4).unwrap());
        assert_eq!("1".parse::<Weight>().unwrap(), Weight::new(1, 1).unwrap());
        assert!("abc".parse::<Weight>().is_err());
        assert!("3/2".parse::<Weight>().is_err());
    }

    #[test]
    fn deprivation_boundaries() {
        let scheme = IndicatorScheme::new(
            "edu",
            vec![IndicatorSpec::below("edu_years", Dimension::Education, Weight::new(1, 1).unwrap(), 9.0)],
            0.33,
        )
        .unwrap();
        let mut p = Panel::new();
        p.push_column("edu_years", vec![7.0, 9.0, 9.5]).unwrap();
        let m = evaluate_deprivations(&p, &scheme).unwrap();
        assert_eq!(m.get(0, 0), 1);
        assert_eq!(m.get(1, 0), 0, "value at the cutoff is not deprived");
        assert_eq!(m.get(2, 0), 0);
    }

    #[test]
    fn flag_rows_and_errors() {
        let scheme = two_equal();
        let mut p = Panel::new();
        p.push_column("a", vec![0.0, 1.0]).unwrap();
        p.push_column("b", vec![0.0, 2.0]).unwrap();
        let err = evaluate_deprivations(&p, &scheme).unwrap_err();
        assert!(matches!(err, Error::NonBinaryFlag { row: 1, .. }));

        let mut p = Panel::new();
        p.push_column("a", vec![0.0, 1.0, f64::NAN]).unwrap();
        p.push_column("b", vec![0.0, 0.0, 1.0]).unwrap();
        let m = evaluate_deprivations(&p, &scheme).unwrap();
        assert_eq!(m.row(0), &[0, 0]);
        assert_eq!(m.nrows(), 2);
        assert_eq!(m.dropped_missing, 1);
        let opts = EvalOptions {
            missing: MissingPolicy::Nondeprived,
            group_column: None,
        };
        let m = evaluate_deprivations_with(&p, &scheme, &opts).unwrap();
        assert_eq!(m.row(2), &[0, 1]);
        let opts = EvalOptions {
            missing: MissingPolicy::Strict,
            group_column: None,
        };
        assert!(matches!(
            evaluate_deprivations_with(&p, &scheme, &opts),
            Err(Error::MissingValue { row: 2, .. })
        ));

        let mut p = Panel::new();
        p.push_column("a", vec![0.0]).unwrap();
        assert!(matches!(evaluate_deprivations(&p, &scheme), Err(Error::UnknownColumn(_))));
    }

    #[test]
    fn scores() {
        let scheme = two_equal();
        let m = DeprivationMatrix::from_rows(&[vec![1, 0], vec![1, 1]]).unwrap();
        assert_eq!(deprivation_scores(&m, &scheme).unwrap(), vec![0.5, 1.0]);

        let b = IndicatorScheme::baseline();
        let mut row = vec![0u8; 11];
        row[0] = 1;
        row[1] = 1;
        let m = DeprivationMatrix::from_rows(&[row, vec![1; 11]]).unwrap();
        let d = deprivation_scores(&m, &b).unwrap();
        assert!((d[0] - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(d[1], 1.0);

        assert!(matches!(deprivation_scores(&m, &scheme), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn four_household_example() {
        let scheme = two_equal();
        let r = compute_mpi(&four_households(), &scheme, 0.5).unwrap();
        assert_eq!(r.q, 3);
        assert_eq!(r.h, 0.75);
        assert!((r.a - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(r.m0, 0.5);
        assert_eq!(r.censored_headcounts, vec![3, 1]);
        let c = dimensional_contributions(&r, &scheme).unwrap();
        assert_eq!(c.indicators[0].share, 0.75);
        assert_eq!(c.indicators[1].share, 0.25);
        assert_eq!(c.dimensions[0].name, "education");
    }

    #[test]
    fn nobody_poor() {
        let b = IndicatorScheme::baseline();
        let m = DeprivationMatrix::from_rows(&vec![vec![0; 11]; 5]).unwrap();
        let r = compute_mpi(&m, &b, 0.33).unwrap();
        assert_eq!((r.h, r.a, r.m0), (0.0, 0.0, 0.0));
        assert!(r.contributions.is_none());
        assert!(matches!(dimensional_contributions(&r, &b), Err(Error::ZeroAdjustedHeadcount)));
    }

    #[test]
    fn single_indicator_contribution_is_one() {
        let s = IndicatorScheme::new(
            "one",
            vec![IndicatorSpec::flag("a", Dimension::Health, Weight::new(1, 1).unwrap())],
            1.0,
        )
        .unwrap();
        let m = DeprivationMatrix::from_rows(&[vec![1], vec![0]]).unwrap();
        let r = compute_mpi(&m, &s, 1.0).unwrap();
        assert_eq!(r.contributions.unwrap().indicators[0].share, 1.0);
    }

    #[test]
    fn empty_matrix_and_bad_k() {
        let s = two_equal();
        let m = DeprivationMatrix::from_rows(&[]).unwrap();
        assert!(matches!(compute_mpi(&m, &s, 0.5), Err(Error::DimensionMismatch(_)) | Err(Error::Empty(_))));
        assert!(compute_mpi(&four_households(), &s, 1.5).is_err());
    }

    #[test]
    fn subgroups() {
        let s = two_equal();
        let m = four_households();
        let same = vec!["all".to_string(); 4];
        let dec = subgroup_decompose(&m, &s, 0.5, &same).unwrap();
        assert_eq!(dec.groups.len(), 1);
        assert_eq!(dec.groups[0].result, dec.total);

        let doubled = DeprivationMatrix::from_rows(&[
            vec![1, 1], vec![1, 0], vec![0, 0], vec![1, 0],
            vec![1, 1], vec![1, 0], vec![0, 0], vec![1, 0],
        ])
        .unwrap();
        let labels: Vec<String> = (0..8).map(|i| if i < 4 { "r" } else { "u" }.to_string()).collect();
        let dec = subgroup_decompose(&doubled, &s, 0.5, &labels).unwrap();
        assert_eq!(dec.groups[0].result.m0, dec.total.m0);
        assert_eq!(dec.groups[1].result.h, dec.total.h);
        assert!(subgroup_decompose(&doubled, &s, 0.5, &labels[..3]).is_err());
    }

    #[test]
    fn curve() {
        let s = IndicatorScheme::baseline();
        let mut rows = vec![vec![0u8; 11]; 3];
        rows[0][0] = 1;
        rows[0][1] = 1;
        rows[1][2] = 1;
        let m = DeprivationMatrix::from_rows(&rows).unwrap();
        let c = incidence_curve(&m, &s, &[0.2, 0.33, 0.4, 1.0]).unwrap();
        assert!(c.windows(2).all(|w| w[1].h <= w[0].h && w[1].m0 <= w[0].m0));
        assert_eq!(c[3].h, 0.0);
        assert!(incidence_curve(&m, &s, &[]).is_err());
        assert!(incidence_curve(&m, &s, &[0.4, 0.2]).is_err());
        assert_eq!(k_grid(0.05).unwrap().len(), 20);
        assert_eq!(*k_grid(0.05).unwrap().last().unwrap(), 1.0);
    }
}
