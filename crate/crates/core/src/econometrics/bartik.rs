//! Shift-share (Bartik) instruments.
//!
//! For a participation series `s`, district `d` and wave `t` with previous
//! wave `t-1`:
//!
//! ```text
//! share_{d,t}  = mean of s over district d at t-1
//! shock_t      = m_t / m_{t-1} - 1,   m_t = national mean of s at t
//! IV_{i,t}     = share_{d(i),t} * shock_t
//! ```
//!
//! Rows in the first wave have no lag and receive NaN.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::Panel;

fn default_prefix() -> String {
    "Bartik".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BartikConfig {
    pub region: String,
    pub time: String,
    pub participation: Vec<String>,
    /// Instrument column name is `prefix` followed by the participation name.
    #[serde(default = "default_prefix")]
    pub prefix: String,
}

impl BartikConfig {
    pub fn new<S: Into<String>>(region: impl Into<String>, time: impl Into<String>, participation: impl IntoIterator<Item = S>) -> Self {
        Self {
            region: region.into(),
            time: time.into(),
            participation: participation.into_iter().map(Into::into).collect(),
            prefix: default_prefix(),
        }
    }

    pub fn instrument_name(&self, participation: &str) -> String {
        format!("{}{participation}", self.prefix)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Shock {
    pub wave: i64,
    pub previous_wave: i64,
    pub national_mean: f64,
    pub previous_mean: f64,
    pub change_rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BartikInstrument {
    pub name: String,
    pub participation: String,
    pub values: Vec<f64>,
    pub shocks: Vec<Shock>,
}

fn integer(v: f64, column: &str, row: usize) -> Result<i64> {
    if v.is_nan() {
        return Err(Error::MissingValue {
            column: column.to_string(),
            row,
        });
    }
    if v.fract() != 0.0 {
        return Err(Error::Spec(format!("`{column}` has non-integer value {v} at row {row}")));
    }
    Ok(v as i64)
}

#[derive(Default, Clone, Copy)]
struct MeanAcc {
    sum: f64,
    n: usize,
}

impl MeanAcc {
    fn push(&mut self, v: f64) {
        if !v.is_nan() {
            self.sum += v;
            self.n += 1;
        }
    }

    fn mean(self) -> Option<f64> {
        (self.n > 0).then(|| self.sum / self.n as f64)
    }
}

/// Builds one instrument per participation column.
pub fn build_bartik_iv(data: &Panel, config: &BartikConfig) -> Result<Vec<BartikInstrument>> {
    if config.participation.is_empty() {
        return Err(Error::Spec("no participation columns for the instrument".into()));
    }
    let region_col = data.column(&config.region)?;
    let time_col = data.column(&config.time)?;
    let n = data.nrows();
    let mut region = Vec::with_capacity(n);
    let mut time = Vec::with_capacity(n);
    for r in 0..n {
        region.push(integer(region_col[r], &config.region, r)?);
        time.push(integer(time_col[r], &config.time, r)?);
    }
    let mut waves: Vec<i64> = time.clone();
    waves.sort_unstable();
    waves.dedup();
    let previous: BTreeMap<i64, i64> = waves.windows(2).map(|w| (w[1], w[0])).collect();

    config
        .participation
        .iter()
        .map(|p| {
            let s = data.column(p)?;
            let mut district: BTreeMap<(i64, i64), MeanAcc> = BTreeMap::new();
            let mut national: BTreeMap<i64, MeanAcc> = BTreeMap::new();
            for r in 0..n {
                district.entry((region[r], time[r])).or_default().push(s[r]);
                national.entry(time[r]).or_default().push(s[r]);
            }
            let mut shocks = Vec::new();
            let mut rate: BTreeMap<i64, f64> = BTreeMap::new();
            for (&t, &prev) in &previous {
                let m_t = national[&t].mean();
                let m_prev = national[&prev].mean();
                let (Some(m_t), Some(m_prev)) = (m_t, m_prev) else {
                    return Err(Error::MissingLag(format!(
                        "`{p}` has no observed values in wave {}",
                        if m_prev.is_none() { prev } else { t }
                    )));
                };
                if m_prev == 0.0 {
                    return Err(Error::InvalidParameter(format!(
                        "national mean of `{p}` is zero in wave {prev}; change rate undefined"
                    )));
                }
                let change_rate = m_t / m_prev - 1.0;
                rate.insert(t, change_rate);
                shocks.push(Shock {
                    wave: t,
                    previous_wave: prev,
                    national_mean: m_t,
                    previous_mean: m_prev,
                    change_rate,
                });
            }
            let mut values = vec![f64::NAN; n];
            for r in 0..n {
                let Some(&prev) = previous.get(&time[r]) else {
                    continue;
                };
                let share = district
                    .get(&(region[r], prev))
                    .and_then(|a| a.mean())
                    .ok_or_else(|| {
                        Error::MissingLag(format!(
                            "district {} has no `{p}` observations in wave {prev}",
                            region[r]
                        ))
                    })?;
                values[r] = share * rate[&time[r]];
            }
            Ok(BartikInstrument {
                name: config.instrument_name(p),
                participation: p.clone(),
                values,
                shocks,
            })
        })
        .collect()
}

/// Builds the instruments and appends them to the panel.
pub fn append_bartik_iv(data: &mut Panel, config: &BartikConfig) -> Result<Vec<BartikInstrument>> {
    let ivs = build_bartik_iv(data, config)?;
    for iv in &ivs {
        data.set_column(iv.name.clone(), iv.values.clone())?;
    }
    Ok(ivs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn panel(s: Vec<f64>) -> Panel {
        // two districts x three waves, two households per district
        let mut p = Panel::new();
        let mut district = Vec::new();
        let mut wave = Vec::new();
        for t in [2012.0, 2014.0, 2016.0] {
            for d in [1.0, 1.0, 2.0, 2.0] {
                district.push(d);
                wave.push(t);
            }
        }
        p.push_column("district", district).unwrap();
        p.push_column("wave", wave).unwrap();
        p.push_column("s", s).unwrap();
        p
    }

    #[test]
    fn share_times_shock() {
        // 2012 district means 0.4 / 0.6, national 0.5; 2014 national 0.55 -> shock 0.1
        let s = vec![0.2, 0.6, 0.6, 0.6, 0.5, 0.6, 0.5, 0.6, 0.55, 0.55, 0.55, 0.55];
        let iv = &build_bartik_iv(&panel(s), &BartikConfig::new("district", "wave", ["s"])).unwrap()[0];
        assert_eq!(iv.name, "Bartiks");
        assert!(iv.values[..4].iter().all(|v| v.is_nan()));
        assert!((iv.values[4] - 0.04).abs() < 1e-12);
        assert!((iv.values[6] - 0.06).abs() < 1e-12);
        // 2016 national mean equals 2014 -> shock 0 -> instrument 0
        assert!(iv.values[8..].iter().all(|&v| v == 0.0));
        assert_eq!(iv.values[4], iv.values[5]);
    }

    #[test]
    fn missing_lag_is_an_error() {
        let mut s = vec![0.5; 12];
        s[2] = f64::NAN;
        s[3] = f64::NAN;
        let err = build_bartik_iv(&panel(s), &BartikConfig::new("district", "wave", ["s"])).unwrap_err();
        assert!(matches!(err, Error::MissingLag(_)));
    }
}
