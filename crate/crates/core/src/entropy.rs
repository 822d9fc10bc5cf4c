//! Entropy-weighted livelihood asset scores.
//!
//! Indicators are min-max normalised, weighted by their Shannon-entropy
//! divergence within each capital, and summed into one score per capital. The
//! total score is the sum of the capital scores.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::Panel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssetOrientation {
    /// Higher is better.
    #[default]
    Benefit,
    /// Lower is better.
    Cost,
}

/// Column-major matrix with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedMatrix {
    pub columns: Vec<Vec<f64>>,
    /// Column had zero range (or zero mass) and carries no information.
    pub degenerate: Vec<bool>,
}

impl NormalizedMatrix {
    /// Wraps already-normalised columns; a column is degenerate when it sums to zero.
    pub fn from_columns(columns: Vec<Vec<f64>>) -> Result<Self> {
        let n = columns.first().map_or(0, Vec::len);
        for (j, c) in columns.iter().enumerate() {
            if c.len() != n {
                return Err(Error::DimensionMismatch(format!("column {j} has {} rows, expected {n}", c.len())));
            }
            if let Some(v) = c.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(Error::InvalidParameter(format!("normalised value {v} outside [0, 1]")));
            }
        }
        let degenerate = columns.iter().map(|c| c.iter().sum::<f64>() == 0.0).collect();
        Ok(NormalizedMatrix { columns, degenerate })
    }

    pub fn nrows(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }
}

/// Min-max normalisation; constant columns become all zeros and are flagged.
pub fn normalize_indicators(columns: &[&[f64]], orientations: &[AssetOrientation]) -> Result<NormalizedMatrix> {
    if columns.len() != orientations.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} columns but {} orientations",
            columns.len(),
            orientations.len()
        )));
    }
    let mut out = Vec::with_capacity(columns.len());
    let mut degenerate = Vec::with_capacity(columns.len());
    for (j, (col, orient)) in columns.iter().zip(orientations).enumerate() {
        if col.is_empty() {
            return Err(Error::Empty(format!("indicator column {j}")));
        }
        if let Some(row) = col.iter().position(|v| !v.is_finite()) {
            return Err(Error::MissingValue {
                column: format!("indicator {j}"),
                row,
            });
        }
        let (lo, hi) = col
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        let range = hi - lo;
        if range == 0.0 {
            out.push(vec![0.0; col.len()]);
            degenerate.push(true);
            continue;
        }
        out.push(
            col.iter()
                .map(|&v| match orient {
                    AssetOrientation::Benefit => (v - lo) / range,
                    AssetOrientation::Cost => (hi - v) / range,
                })
                .collect(),
        );
        degenerate.push(false);
    }
    Ok(NormalizedMatrix { columns: out, degenerate })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EntropyWeights {
    pub weights: Vec<f64>,
    pub entropy: Vec<f64>,
    pub divergence: Vec<f64>,
}

/// Shannon-entropy weights: `p_ij = x_ij / sum_i x_ij`,
/// `e_j = -(1/ln n) sum_i p_ij ln p_ij`, `w_j = (1 - e_j) / sum (1 - e)`.
///
/// Degenerate columns are assigned `e_j = 1`, hence zero weight.
pub fn entropy_weights(matrix: &NormalizedMatrix) -> Result<EntropyWeights> {
    let n = matrix.nrows();
    if n < 2 {
        return Err(Error::InvalidParameter(format!(
            "entropy weights need at least 2 observations, got {n}"
        )));
    }
    let ln_n = (n as f64).ln();
    let mut entropy = Vec::with_capacity(matrix.columns.len());
    for (col, &degen) in matrix.columns.iter().zip(&matrix.degenerate) {
        let total: f64 = col.iter().sum();
        if degen || total == 0.0 {
            entropy.push(1.0);
            continue;
        }
        let h: f64 = col
            .iter()
            .filter(|&&x| x > 0.0)
            .map(|&x| {
                let p = x / total;
                p * p.ln()
            })
            .sum();
        entropy.push((-h / ln_n).clamp(0.0, 1.0));
    }
    let divergence: Vec<f64> = entropy.iter().map(|e| 1.0 - e).collect();
    let mass: f64 = divergence.iter().sum();
    if mass <= 0.0 {
        return Err(Error::NoWeightMass(String::new()));
    }
    let weights = divergence.iter().map(|d| d / mass).collect();
    Ok(EntropyWeights {
        weights,
        entropy,
        divergence,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssetIndicator {
    pub column: String,
    #[serde(default)]
    pub orientation: AssetOrientation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Capital {
    pub name: String,
    /// Output column name for this capital's score.
    pub score: String,
    pub indicators: Vec<AssetIndicator>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapitalGrouping {
    capitals: Vec<Capital>,
}

pub const TOTAL_SCORE: &str = "ZScore";

impl CapitalGrouping {
    pub fn new(capitals: Vec<Capital>) -> Result<Self> {
        if capitals.is_empty() {
            return Err(Error::InvalidParameter("no capitals".into()));
        }
        let mut seen = HashSet::new();
        let mut names = HashSet::new();
        for cap in &capitals {
            if cap.indicators.is_empty() {
                return Err(Error::InvalidParameter(format!("capital `{}` has no indicators", cap.name)));
            }
            if !names.insert(cap.score.as_str()) || cap.score == TOTAL_SCORE {
                return Err(Error::InvalidParameter(format!("duplicate score name `{}`", cap.score)));
            }
            for ind in &cap.indicators {
                if !seen.insert(ind.column.as_str()) {
                    return Err(Error::InvalidParameter(format!(
                        "indicator `{}` appears in more than one capital",
                        ind.column
                    )));
                }
            }
        }
        Ok(CapitalGrouping { capitals })
    }

    /// Six capitals with thirteen benefit-type indicators, columns `H1` .. `PS2`.
    pub fn six_capitals() -> Self {
        let cap = |name: &str, score: &str, cols: &[&str]| Capital {
            name: name.into(),
            score: score.into(),
            indicators: cols
                .iter()
                .map(|c| AssetIndicator {
                    column: (*c).into(),
                    orientation: AssetOrientation::Benefit,
                })
                .collect(),
        };
        CapitalGrouping::new(vec![
            cap("human", "HScore", &["H1", "H2"]),
            cap("social", "SScore", &["S1", "S2", "S3"]),
            cap("physical", "PHScore", &["PH1", "PH2"]),
            cap("financial", "FScore", &["F1", "F2"]),
            cap("natural", "NScore", &["N1", "N2"]),
            cap("psychological", "PSScore", &["PS1", "PS2"]),
        ])
        .expect("built-in grouping is valid")
    }

    pub fn capitals(&self) -> &[Capital] {
        &self.capitals
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightingMode {
    /// One set of weights over all waves.
    #[default]
    Pooled,
    /// Normalise and weight separately within each wave.
    PerWave,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CapitalWeights {
    pub capital: String,
    /// Wave the weights belong to; `None` for pooled weights.
    pub wave: Option<i64>,
    pub indicators: Vec<String>,
    pub weights: EntropyWeights,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LivelihoodScores {
    /// Score column names in capital order.
    pub names: Vec<String>,
    /// `scores[c][i]`: capital `c`, household row `i`.
    pub scores: Vec<Vec<f64>>,
    pub total: Vec<f64>,
    pub weights: Vec<CapitalWeights>,
}

impl LivelihoodScores {
    /// Appends one column per capital plus `ZScore`.
    pub fn append_to(&self, panel: &mut Panel) -> Result<()> {
        for (name, col) in self.names.iter().zip(&self.scores) {
            panel.set_column(name.clone(), col.clone())?;
        }
        panel.set_column(TOTAL_SCORE, self.total.clone())
    }
}

fn score_rows(
    panel: &Panel,
    capital: &Capital,
    rows: &[usize],
    wave: Option<i64>,
) -> Result<(Vec<f64>, CapitalWeights)> {
    let raw = capital
        .indicators
        .iter()
        .map(|ind| {
            let col = panel.column(&ind.column)?;
            rows.iter()
                .map(|&r| {
                    let v = col[r];
                    if v.is_nan() {
                        Err(Error::MissingValue {
                            column: ind.column.clone(),
                            row: r,
                        })
                    } else {
                        Ok(v)
                    }
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let views: Vec<&[f64]> = raw.iter().map(Vec::as_slice).collect();
    let orient: Vec<AssetOrientation> = capital.indicators.iter().map(|i| i.orientation).collect();
    let norm = normalize_indicators(&views, &orient)?;
    let weights = entropy_weights(&norm).map_err(|e| match e {
        Error::NoWeightMass(_) => Error::NoWeightMass(format!(" in capital `{}`", capital.name)),
        other => other,
    })?;
    let scores = (0..rows.len())
        .map(|i| {
            norm.columns
                .iter()
                .zip(&weights.weights)
                .map(|(c, w)| w * c[i])
                .sum()
        })
        .collect();
    Ok((
        scores,
        CapitalWeights {
            capital: capital.name.clone(),
            wave,
            indicators: capital.indicators.iter().map(|i| i.column.clone()).collect(),
            weights,
        },
    ))
}

/// Per-capital entropy-weighted scores and their total for every panel row.
///
/// `PerWave` requires `wave_column`.
pub fn capital_scores(
    panel: &Panel,
    grouping: &CapitalGrouping,
    mode: WeightingMode,
    wave_column: Option<&str>,
) -> Result<LivelihoodScores> {
    let n = panel.nrows();
    let partitions: Vec<(Option<i64>, Vec<usize>)> = match mode {
        WeightingMode::Pooled => vec![(None, (0..n).collect())],
        WeightingMode::PerWave => {
            let col = wave_column
                .ok_or_else(|| Error::Spec("per-wave weighting needs a wave column".into()))?;
            let waves = panel.column(col)?;
            let mut parts: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
            for (r, &w) in waves.iter().enumerate() {
                if w.is_nan() {
                    return Err(Error::MissingValue {
                        column: col.into(),
                        row: r,
                    });
                }
                parts.entry(w as i64).or_default().push(r);
            }
            parts.into_iter().map(|(w, rows)| (Some(w), rows)).collect()
        }
    };

    let mut scores = vec![vec![0.0; n]; grouping.capitals.len()];
    let mut weights = Vec::new();
    for (c, capital) in grouping.capitals.iter().enumerate() {
        for (wave, rows) in &partitions {
            let (s, w) = score_rows(panel, capital, rows, *wave)?;
            for (&r, v) in rows.iter().zip(s) {
                scores[c][r] = v;
            }
            weights.push(w);
        }
    }
    let total = (0..n).map(|i| scores.iter().map(|s| s[i]).sum()).collect();
    Ok(LivelihoodScores {
        names: grouping.capitals.iter().map(|c| c.score.clone()).collect(),
        scores,
        total,
        weights,
    })
}
