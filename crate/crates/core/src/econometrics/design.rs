//! Model specifications and design-matrix assembly.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::Panel;

pub const INTERCEPT: &str = "const";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    #[default]
    Logit,
    Probit,
    Linear,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub response: String,
    pub regressors: Vec<String>,
    #[serde(default)]
    pub fixed_effects: Vec<String>,
    #[serde(default)]
    pub cluster: Option<String>,
    #[serde(default)]
    pub family: Family,
    #[serde(default = "yes")]
    pub intercept: bool,
}

impl ModelSpec {
    pub fn new<S: Into<String>>(response: impl Into<String>, regressors: impl IntoIterator<Item = S>, family: Family) -> Self {
        Self {
            response: response.into(),
            regressors: regressors.into_iter().map(Into::into).collect(),
            fixed_effects: Vec::new(),
            cluster: None,
            family,
            intercept: true,
        }
    }

    pub fn with_fixed_effects<S: Into<String>>(mut self, fe: impl IntoIterator<Item = S>) -> Self {
        self.fixed_effects = fe.into_iter().map(Into::into).collect();
        self
    }

    pub fn with_cluster(mut self, cluster: impl Into<String>) -> Self {
        self.cluster = Some(cluster.into());
        self
    }

    pub fn with_family(mut self, family: Family) -> Self {
        self.family = family;
        self
    }

    pub fn without_intercept(mut self) -> Self {
        self.intercept = false;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.regressors.iter().any(|r| r == &self.response) {
            return Err(Error::Spec(format!("response `{}` also listed as a regressor", self.response)));
        }
        let mut seen = std::collections::HashSet::new();
        for r in &self.regressors {
            if !seen.insert(r) {
                return Err(Error::Spec(format!("regressor `{r}` listed twice")));
            }
        }
        let mut fe_seen = std::collections::HashSet::new();
        for f in &self.fixed_effects {
            if !fe_seen.insert(f) {
                return Err(Error::Spec(format!("fixed effect `{f}` listed twice")));
            }
            if f == &self.response || self.regressors.contains(f) {
                return Err(Error::Spec(format!("fixed-effect key `{f}` also used as a variable")));
            }
        }
        if self.regressors.is_empty() && !self.intercept && self.fixed_effects.is_empty() {
            return Err(Error::Spec("model has no columns".into()));
        }
        Ok(())
    }

    /// Every panel column the model reads.
    pub fn columns(&self) -> Vec<&str> {
        let mut cols: Vec<&str> = vec![self.response.as_str()];
        cols.extend(self.regressors.iter().map(String::as_str));
        cols.extend(self.fixed_effects.iter().map(String::as_str));
        if let Some(c) = &self.cluster {
            if !cols.contains(&c.as_str()) {
                cols.push(c);
            }
        }
        cols
    }
}

/// Levels of one fixed-effect key; `levels[0]` is the dropped reference.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixedEffectLevels {
    pub column: String,
    pub levels: Vec<i64>,
}

impl FixedEffectLevels {
    pub fn reference(&self) -> i64 {
        self.levels[0]
    }
}

#[derive(Debug, Clone)]
pub struct Design {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub names: Vec<String>,
    /// Panel rows used, after listwise deletion.
    pub rows: Vec<usize>,
    pub clusters: Option<Vec<usize>>,
    pub n_clusters: usize,
    pub fe_levels: Vec<FixedEffectLevels>,
    /// Intercept plus regressors; dummy columns follow.
    pub n_structural: usize,
}

/// Rows with no missing cell in any of `columns`.
pub fn complete_rows(data: &Panel, columns: &[&str]) -> Result<Vec<usize>> {
    let cols = columns.iter().map(|c| data.column(c)).collect::<Result<Vec<_>>>()?;
    Ok((0..data.nrows())
        .filter(|&r| cols.iter().all(|c| !c[r].is_nan()))
        .collect())
}

fn as_level(v: f64, column: &str) -> Result<i64> {
    if v.fract() != 0.0 || !v.is_finite() {
        return Err(Error::Spec(format!("fixed-effect key `{column}` has non-integer value {v}")));
    }
    Ok(v as i64)
}

/// Dense 0-based ids for the distinct values of a cluster column.
pub fn cluster_ids(values: &[f64]) -> (Vec<usize>, usize) {
    let mut map: BTreeMap<u64, usize> = BTreeMap::new();
    let mut order: Vec<(f64, usize)> = values.iter().copied().zip(0..).collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0));
    for (v, _) in &order {
        let next = map.len();
        map.entry(v.to_bits()).or_insert(next);
    }
    let ids = values.iter().map(|v| map[&v.to_bits()]).collect();
    (ids, map.len())
}

impl Design {
    pub fn build(data: &Panel, spec: &ModelSpec) -> Result<Design> {
        spec.validate()?;
        let rows = complete_rows(data, &spec.columns())?;
        Self::build_rows(data, spec, &rows, None)
    }

    /// Assembles the design over `rows`. With `levels` given, dummy columns
    /// follow those levels and unseen levels are an error.
    pub fn build_rows(
        data: &Panel,
        spec: &ModelSpec,
        rows: &[usize],
        levels: Option<&[FixedEffectLevels]>,
    ) -> Result<Design> {
        if rows.is_empty() {
            return Err(Error::Empty("no complete rows for the model".into()));
        }
        let n = rows.len();
        let fe_levels = match levels {
            Some(l) => l.to_vec(),
            None => spec
                .fixed_effects
                .iter()
                .map(|f| {
                    let col = data.column(f)?;
                    let mut lv = rows.iter().map(|&r| as_level(col[r], f)).collect::<Result<Vec<_>>>()?;
                    lv.sort_unstable();
                    lv.dedup();
                    Ok(FixedEffectLevels {
                        column: f.clone(),
                        levels: lv,
                    })
                })
                .collect::<Result<Vec<_>>>()?,
        };

        let mut names = Vec::new();
        if spec.intercept {
            names.push(INTERCEPT.to_string());
        }
        names.extend(spec.regressors.iter().cloned());
        let n_structural = names.len();
        for fe in &fe_levels {
            names.extend(fe.levels[1..].iter().map(|l| format!("{}={l}", fe.column)));
        }
        let k = names.len();
        let mut x = DMatrix::<f64>::zeros(n, k);
        let mut j = 0;
        if spec.intercept {
            x.column_mut(0).fill(1.0);
            j = 1;
        }
        for r in &spec.regressors {
            let col = data.column(r)?;
            for (i, &row) in rows.iter().enumerate() {
                x[(i, j)] = col[row];
            }
            j += 1;
        }
        for fe in &fe_levels {
            let col = data.column(&fe.column)?;
            let index: BTreeMap<i64, usize> = fe.levels.iter().enumerate().map(|(p, &l)| (l, p)).collect();
            for (i, &row) in rows.iter().enumerate() {
                let level = as_level(col[row], &fe.column)?;
                match index.get(&level) {
                    Some(0) => {}
                    Some(&p) => x[(i, j + p - 1)] = 1.0,
                    None => {
                        return Err(Error::Spec(format!(
                            "level {level} of `{}` was not seen when fitting",
                            fe.column
                        )))
                    }
                }
            }
            j += fe.levels.len() - 1;
        }
        let ycol = data.column(&spec.response)?;
        let y = DVector::from_iterator(n, rows.iter().map(|&r| ycol[r]));
        let (clusters, n_clusters) = match &spec.cluster {
            Some(c) => {
                let col = data.column(c)?;
                let vals: Vec<f64> = rows.iter().map(|&r| col[r]).collect();
                let (ids, g) = cluster_ids(&vals);
                (Some(ids), g)
            }
            None => (None, n),
        };
        Ok(Design {
            x,
            y,
            names,
            rows: rows.to_vec(),
            clusters,
            n_clusters,
            fe_levels,
            n_structural,
        })
    }

    pub fn nobs(&self) -> usize {
        self.x.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.x.ncols()
    }

    /// Fails with the first column that is (numerically) a combination of
    /// the ones before it.
    pub fn check_rank(&self) -> Result<()> {
        if self.nobs() < self.ncols() {
            return Err(Error::RankDeficient(format!(
                "{} observations for {} columns",
                self.nobs(),
                self.ncols()
            )));
        }
        check_rank(&self.x, &self.names)
    }
}

pub(crate) fn check_rank(x: &DMatrix<f64>, names: &[String]) -> Result<()> {
    let k = x.ncols();
    let xtx = x.tr_mul(x);
    let scale: Vec<f64> = (0..k).map(|j| xtx[(j, j)].sqrt()).collect();
    // Cholesky on the unit-diagonal rescaling, column by column.
    let mut l = DMatrix::<f64>::zeros(k, k);
    for j in 0..k {
        if scale[j] == 0.0 {
            return Err(Error::RankDeficient(names[j].clone()));
        }
        let mut d = 1.0;
        for p in 0..j {
            d -= l[(j, p)] * l[(j, p)];
        }
        if d < 1e-10 {
            return Err(Error::RankDeficient(names[j].clone()));
        }
        let d = d.sqrt();
        l[(j, j)] = d;
        for i in j + 1..k {
            let mut s = xtx[(i, j)] / (scale[i] * scale[j]);
            for p in 0..j {
                s -= l[(i, p)] * l[(j, p)];
            }
            l[(i, j)] = s / d;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> Panel {
        let mut p = Panel::new();
        p.push_column("y", vec![1.0, 0.0, 1.0, 0.0, f64::NAN]).unwrap();
        p.push_column("x", vec![0.5, 1.5, 2.0, -1.0, 3.0]).unwrap();
        p.push_column("prov", vec![3.0, 1.0, 3.0, 2.0, 1.0]).unwrap();
        p
    }

    #[test]
    fn dummies_drop_lowest_level() {
        let spec = ModelSpec::new("y", ["x"], Family::Linear).with_fixed_effects(["prov"]);
        let d = Design::build(&toy(), &spec).unwrap();
        assert_eq!(d.names, ["const", "x", "prov=2", "prov=3"]);
        assert_eq!(d.rows, [0, 1, 2, 3]);
        assert_eq!(d.x.row(0).iter().copied().collect::<Vec<_>>(), [1.0, 0.5, 0.0, 1.0]);
        assert_eq!(d.x.row(1).iter().copied().collect::<Vec<_>>(), [1.0, 1.5, 0.0, 0.0]);
        assert_eq!(d.fe_levels[0].reference(), 1);
        assert_eq!(d.n_structural, 2);
    }

    #[test]
    fn spec_validation() {
        assert!(ModelSpec::new("y", ["y"], Family::Logit).validate().is_err());
        assert!(ModelSpec::new("y", ["x", "x"], Family::Logit).validate().is_err());
        assert!(ModelSpec::new("y", ["x"], Family::Logit)
            .with_fixed_effects(["x"])
            .validate()
            .is_err());
    }

    #[test]
    fn rank_check_names_the_offending_column() {
        let mut p = toy();
        p.push_column("x2", vec![1.0, 3.0, 4.0, -2.0, 6.0]).unwrap();
        let spec = ModelSpec::new("y", ["x", "x2"], Family::Linear);
        let d = Design::build(&p, &spec).unwrap();
        assert!(matches!(d.check_rank(), Err(Error::RankDeficient(c)) if c == "x2"));
    }

    #[test]
    fn cluster_ids_are_dense_and_sorted() {
        let (ids, g) = cluster_ids(&[7.0, 2.0, 7.0, 5.0]);
        assert_eq!(ids, [2, 0, 2, 1]);
        assert_eq!(g, 3);
    }
}
