//! Subcommand implementations. Each writes its tables and a summary document
//! into the output directory.

use anyhow::{bail, Context, Result};
use mdpov::econometrics::{
    append_bartik_iv, average_marginal_effects, chow_test, fit, fit_recursive_joint, permutation_test,
    propensity_match, winsorize, CoefRow, FitResult, ModelSpec,
};
use mdpov::entropy::{capital_scores, TOTAL_SCORE};
use mdpov::mpi::{
    compute_mpi, evaluate_deprivations_with, incidence_curve, k_grid, subgroup_decompose, EvalOptions,
    IndicatorScheme,
};
use mdpov::olg::{comparative_statics, expenditure_uplift, numeric_oracle, solve, PensionMode};
use mdpov::synth::{generate_mpi_sample, generate_panel, DgpConfig};
use mdpov::{Panel, PanelKeys};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{require_columns, PipelineConfig};
use crate::output::{num, sha256_hex, OutputDir, Table};

#[derive(Debug, Clone, Serialize)]
pub struct InputRecord {
    pub path: String,
    pub sha256: String,
    pub rows: usize,
    pub columns: usize,
    /// Columns with at least one missing cell.
    pub missing: Vec<(String, usize)>,
}

/// Shared state of one run.
pub struct Run {
    pub cfg: PipelineConfig,
    pub out: OutputDir,
    pub inputs: Vec<InputRecord>,
    panel: Option<Panel>,
}

fn keyed(panel: Panel, cfg: &PipelineConfig) -> Result<Panel> {
    let (e, t) = (&cfg.input.entity, &cfg.input.time);
    require_columns(&panel, [e.as_str(), t.as_str()], "input key columns")?;
    Ok(panel.with_keys(PanelKeys::new(e.clone(), t.clone()))?)
}

/// Reads a delimited panel, recording its digest and missing-value report.
pub fn ingest(path: &std::path::Path, cfg: &PipelineConfig) -> Result<(Panel, InputRecord)> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    if bytes.is_empty() {
        return Err(mdpov::Error::Empty(format!("{} is empty", path.display())).into());
    }
    let panel = Panel::read_csv(&bytes[..]).with_context(|| format!("ingesting {}", path.display()))?;
    let panel = keyed(panel, cfg).with_context(|| format!("ingesting {}", path.display()))?;
    let report = panel.missing_report();
    let record = InputRecord {
        path: path.display().to_string(),
        sha256: sha256_hex(&bytes),
        rows: report.rows,
        columns: panel.ncols(),
        missing: report.missing.into_iter().filter(|(_, n)| *n > 0).collect(),
    };
    Ok((panel, record))
}

impl Run {
    pub fn new(cfg: PipelineConfig, out: OutputDir) -> Self {
        Self {
            cfg,
            out,
            inputs: Vec::new(),
            panel: None,
        }
    }

    fn seed(&self, what: &str) -> Result<u64> {
        self.cfg
            .seed
            .with_context(|| format!("{what} needs a seed (--seed or `seed` in the config)"))
    }

    fn dgp(&self) -> Result<Option<DgpConfig>> {
        let Some(table) = &self.cfg.synth else { return Ok(None) };
        let mut table = table.clone();
        if let Some(s) = self.cfg.seed {
            table.insert("seed".into(), toml::Value::Integer(s as i64));
        }
        if !table.contains_key("seed") {
            bail!("[synth] needs a seed (--seed, top-level `seed` or `synth.seed`)");
        }
        let dgp: DgpConfig = table.try_into().context("parsing [synth]")?;
        Ok(Some(dgp))
    }

    /// Input panel, else a panel generated from `[synth]`.
    fn panel(&mut self) -> Result<&Panel> {
        if self.panel.is_none() {
            let panel = if let Some(path) = self.cfg.input.panel.clone() {
                let (p, rec) = ingest(&path, &self.cfg)?;
                self.inputs.push(rec);
                p
            } else if let Some(dgp) = self.dgp()? {
                generate_panel(&dgp)?.panel
            } else {
                bail!("no input panel: set [input] panel or provide a [synth] section");
            };
            self.out.write_json(
                "ingest.json",
                &json!({
                    "rows": panel.nrows(),
                    "columns": panel.names(),
                    "missing": panel.missing_report().missing.into_iter().filter(|(_, n)| *n > 0).collect::<Vec<_>>(),
                }),
            )?;
            self.panel = Some(panel);
        }
        Ok(self.panel.as_ref().expect("panel loaded"))
    }

    /// Panel for poverty measurement: the input panel, or the configured
    /// synthetic indicator sample.
    fn mpi_panel(&mut self) -> Result<Panel> {
        if self.cfg.input.panel.is_none() {
            if let Some(profile) = self.cfg.mpi.sample.clone() {
                let seed = self.seed("synthetic indicator sample")?;
                return Ok(generate_mpi_sample(&profile, seed)?);
            }
        }
        Ok(self.panel()?.clone())
    }

    pub fn mpi(&mut self) -> Result<()> {
        let panel = self.mpi_panel()?;
        let scheme = self.cfg.mpi.scheme()?;
        let opts = EvalOptions {
            missing: self.cfg.mpi.missing,
            group_column: self.cfg.mpi.group.clone(),
        };
        let matrix = evaluate_deprivations_with(&panel, &scheme, &opts)?;
        let ids: Vec<String> = scheme.indicators().iter().map(|i| i.id.clone()).collect();
        let dims = dimension_names(&scheme);
        let mut header = vec!["k".to_string(), "n".into(), "q".into(), "H".into(), "A".into(), "M0".into()];
        header.extend(ids.iter().map(|i| format!("C_{i}")));
        header.extend(dims.iter().map(|d| format!("C_{d}")));
        let mut table = Table::new(header);
        let mut detail = Table::new(["k", "indicator", "dimension", "weight", "censored_headcount", "M0_j", "contribution"]);
        let mut groups = Table::new(["k", "group", "n", "population_share", "H", "A", "M0", "share_of_M0"]);
        let mut results = Vec::new();
        for &k in &self.cfg.mpi.k {
            let r = compute_mpi(&matrix, &scheme, k)?;
            let mut row = vec![num(k), r.n.to_string(), r.q.to_string(), num(r.h), num(r.a), num(r.m0)];
            let (ind_shares, dim_shares): (Vec<f64>, Vec<f64>) = match &r.contributions {
                Some(c) => (
                    c.indicators.iter().map(|x| x.share).collect(),
                    c.dimensions.iter().map(|x| x.share).collect(),
                ),
                None => (vec![f64::NAN; ids.len()], vec![f64::NAN; dims.len()]),
            };
            row.extend(ind_shares.iter().chain(&dim_shares).map(|&v| num(v)));
            table.push(row);
            for (j, spec) in scheme.indicators().iter().enumerate() {
                detail.push(vec![
                    num(k),
                    spec.id.clone(),
                    spec.dimension.name().to_string(),
                    spec.weight.to_string(),
                    r.censored_headcounts[j].to_string(),
                    num(r.indicator_m0(&scheme)[j]),
                    num(ind_shares[j]),
                ]);
            }
            if let Some(labels) = &matrix.group_labels {
                let d = subgroup_decompose(&matrix, &scheme, k, labels)?;
                for g in &d.groups {
                    let share = if d.total.m0 > 0.0 {
                        g.population_share * g.result.m0 / d.total.m0
                    } else {
                        f64::NAN
                    };
                    groups.push(vec![
                        num(k),
                        g.label.clone(),
                        g.n.to_string(),
                        num(g.population_share),
                        num(g.result.h),
                        num(g.result.a),
                        num(g.result.m0),
                        num(share),
                    ]);
                }
            }
            results.push(r);
        }
        self.out.write_table("mpi.csv", &table)?;
        self.out.write_table("mpi_indicators.csv", &detail)?;
        if !groups.is_empty() {
            self.out.write_table("mpi_groups.csv", &groups)?;
        }
        self.out.write_json(
            "mpi.json",
            &json!({
                "scheme": scheme.name(),
                "households": matrix.nrows(),
                "dropped_missing": matrix.dropped_missing,
                "results": results,
            }),
        )
    }

    pub fn curve(&mut self) -> Result<()> {
        let panel = self.mpi_panel()?;
        let scheme = self.cfg.mpi.scheme()?;
        let opts = EvalOptions {
            missing: self.cfg.mpi.missing,
            group_column: None,
        };
        let matrix = evaluate_deprivations_with(&panel, &scheme, &opts)?;
        let grid = k_grid(self.cfg.mpi.curve_step)?;
        let points = incidence_curve(&matrix, &scheme, &grid)?;
        let mut h = Table::new(["k", "H"]);
        let mut full = Table::new(["k", "H", "A", "M0"]);
        for p in &points {
            h.push(vec![num(p.k), num(p.h)]);
            full.push(vec![num(p.k), num(p.h), num(p.a), num(p.m0)]);
        }
        self.out.write_table("curve.csv", &h)?;
        self.out.write_table("curve_full.csv", &full)
    }

    pub fn entropy(&mut self) -> Result<()> {
        let grouping = self.cfg.entropy.grouping()?;
        let mode = self.cfg.entropy.mode;
        let (entity, time) = (self.cfg.input.entity.clone(), self.cfg.input.time.clone());
        let panel = self.panel()?;
        let scores = capital_scores(panel, &grouping, mode, Some(&time))?;
        let mut weights = Table::new(["capital", "wave", "indicator", "entropy", "divergence", "weight"]);
        for cw in &scores.weights {
            for (j, ind) in cw.indicators.iter().enumerate() {
                weights.push(vec![
                    cw.capital.clone(),
                    cw.wave.map(|w| w.to_string()).unwrap_or_default(),
                    ind.clone(),
                    num(cw.weights.entropy[j]),
                    num(cw.weights.divergence[j]),
                    num(cw.weights.weights[j]),
                ]);
            }
        }
        let mut header = vec![entity.clone(), time.clone()];
        header.extend(scores.names.iter().cloned());
        header.push(TOTAL_SCORE.into());
        let mut table = Table::new(header);
        let (e, t) = (panel.column(&entity)?, panel.column(&time)?);
        for i in 0..panel.nrows() {
            let mut row = vec![num(e[i]), num(t[i])];
            row.extend(scores.scores.iter().map(|c| num(c[i])));
            row.push(num(scores.total[i]));
            table.push(row);
        }
        let n = panel.nrows() as f64;
        let means: Vec<f64> = scores.scores.iter().map(|c| c.iter().sum::<f64>() / n).collect();
        let summary = json!({
            "mode": mode,
            "rows": panel.nrows(),
            "capital_means": scores.names.iter().zip(&means).map(|(k, v)| (k.clone(), *v)).collect::<Vec<_>>(),
            "sum_of_capital_means": means.iter().sum::<f64>(),
            "total_mean": scores.total.iter().sum::<f64>() / n,
        });
        self.out.write_table("entropy_weights.csv", &weights)?;
        self.out.write_table("entropy_scores.csv", &table)?;
        self.out.write_json("entropy.json", &summary)
    }

    pub fn olg(&mut self) -> Result<()> {
        let p = &self.cfg.olg.params;
        let mut table = Table::new(["mode", "e1", "e2", "savings", "utility", "e1_numeric"]);
        for (label, mode) in [("no_pension", PensionMode::NoPension), ("with_pension", PensionMode::WithPension)] {
            let s = solve(p, mode).with_context(|| format!("solving the {label} case"))?;
            let o = numeric_oracle(p, mode)?;
            table.push(vec![label.into(), num(s.e1), num(s.e2), num(s.savings), num(s.utility), num(o.e1)]);
        }
        let uplift = expenditure_uplift(p)?;
        self.out.write_table("olg.csv", &table)?;
        let mut sweeps = Vec::new();
        for sweep in &self.cfg.olg.sweeps {
            let st = comparative_statics(p, sweep)?;
            let mut t = Table::new(["value", "e1_without", "e1_with", "e2_with", "savings_with", "uplift"]);
            for r in &st.rows {
                t.push(vec![
                    num(r.value),
                    num(r.e1_without),
                    num(r.e1_with),
                    num(r.e2_with),
                    num(r.savings_with),
                    num(r.uplift),
                ]);
            }
            let name = serde_json::to_value(st.parameter)?;
            let name = name.as_str().unwrap_or("sweep").to_string();
            self.out.write_table(&format!("olg_sweep_{name}.csv"), &t)?;
            sweeps.push(json!({ "parameter": name, "e1_trend": st.e1_trend, "uplift_trend": st.uplift_trend }));
        }
        self.out.write_json(
            "olg.json",
            &json!({
                "params": p,
                "uplift": uplift,
                "pension_excess_return": p.pension_excess_return(),
                "sweeps": sweeps,
            }),
        )
    }

    /// Input panel with livelihood scores appended when a model refers to
    /// them, and configured winsorisation applied.
    fn estimation_panel(&mut self) -> Result<Panel> {
        let grouping = self.cfg.entropy.grouping()?;
        let mode = self.cfg.entropy.mode;
        let time = self.cfg.input.time.clone();
        let mut referenced: Vec<String> = Vec::new();
        for m in &self.cfg.models {
            referenced.extend(m.spec.columns().into_iter().map(str::to_string));
        }
        let mut panel = self.panel()?.clone();
        let score_names: Vec<&str> = grouping
            .capitals()
            .iter()
            .map(|c| c.score.as_str())
            .chain([TOTAL_SCORE])
            .collect();
        if referenced.iter().any(|c| !panel.has_column(c) && score_names.contains(&c.as_str())) {
            capital_scores(&panel, &grouping, mode, Some(&time))
                .context("livelihood scores for the models")?
                .append_to(&mut panel)?;
        }
        if let Some(w) = self.cfg.winsorize.clone() {
            require_columns(&panel, w.columns.iter().map(String::as_str), "[winsorize]")?;
            let mut t = Table::new(["column", "lower_bound", "upper_bound", "clipped_low", "clipped_high"]);
            for c in &w.columns {
                let r = winsorize(panel.column(c)?, w.lower, w.upper).with_context(|| format!("winsorising `{c}`"))?;
                t.push(vec![
                    c.clone(),
                    num(r.lower_bound),
                    num(r.upper_bound),
                    r.clipped_low.to_string(),
                    r.clipped_high.to_string(),
                ]);
                panel.set_column(c.clone(), r.values)?;
            }
            self.out.write_table("winsorize.csv", &t)?;
        }
        Ok(panel)
    }

    fn write_fit(&mut self, stem: &str, spec: &ModelSpec, f: &FitResult, data: &Panel) -> Result<()> {
        self.out.write_table(&format!("{stem}.csv"), &coef_table(&f.coef_table()))?;
        let ame = average_marginal_effects(f, data).ok();
        self.out.write_json(
            &format!("{stem}.json"),
            &json!({
                "spec": spec,
                "n_obs": f.n_obs,
                "n_clusters": f.n_clusters,
                "vcov": f.vcov_kind,
                "log_likelihood": f.log_likelihood,
                "rss": f.rss,
                "converged": f.converged,
                "iterations": f.iterations,
                "score_max_norm": f.score_max_norm,
                "fixed_effects": f.fe_levels,
                "average_marginal_effects": ame,
            }),
        )
    }

    pub fn fit(&mut self) -> Result<()> {
        if self.cfg.models.is_empty() {
            bail!("no [[models]] configured");
        }
        let panel = self.estimation_panel()?;
        for m in self.cfg.models.clone() {
            require_columns(&panel, m.spec.columns(), &format!("model `{}`", m.name))?;
            let f = fit(&panel, &m.spec).with_context(|| format!("fitting model `{}`", m.name))?;
            self.write_fit(&format!("fit_{}", m.name), &m.spec, &f, &panel)?;
        }
        Ok(())
    }

    pub fn iv(&mut self) -> Result<()> {
        let iv = self.cfg.iv.clone().context("no [iv] section configured")?;
        let mut panel = self.estimation_panel()?;
        let b = &iv.bartik;
        require_columns(
            &panel,
            [b.region.as_str(), b.time.as_str()].into_iter().chain(b.participation.iter().map(String::as_str)),
            "[iv.bartik]",
        )?;
        let instruments = append_bartik_iv(&mut panel, b)?;
        let mut shocks = Table::new(["instrument", "wave", "previous_wave", "national_mean", "previous_mean", "change_rate"]);
        for ins in &instruments {
            for s in &ins.shocks {
                shocks.push(vec![
                    ins.name.clone(),
                    s.wave.to_string(),
                    s.previous_wave.to_string(),
                    num(s.national_mean),
                    num(s.previous_mean),
                    num(s.change_rate),
                ]);
            }
        }
        self.out.write_table("bartik_shocks.csv", &shocks)?;
        let instrument = iv.instrument();
        require_columns(&panel, iv.first.columns(), "[iv] first stage")?;
        require_columns(&panel, iv.second.columns(), "[iv] second stage")?;
        let naive = fit(&panel, &iv.second).context("single-equation outcome model")?;
        self.write_fit(&format!("iv_{}_naive", iv.name), &iv.second, &naive, &panel)?;
        let j = fit_recursive_joint(&panel, &iv.first, &iv.second, &instrument).context("joint estimation")?;
        self.out.write_table(&format!("iv_{}.csv", iv.name), &coef_table(&j.coef_table()))?;
        let (wz, wp) = j.atanhrho_wald();
        let ame = average_marginal_effects(&j.outcome_fit(), &panel).ok();
        self.out.write_json(
            &format!("iv_{}.json", iv.name),
            &json!({
                "first_stage": j.first_stage,
                "endogenous": j.endogenous,
                "instrument": j.instrument,
                "first_stage_instrument": {
                    "estimate": j.first_coef(&instrument)?,
                    "se": j.first_se(&instrument)?,
                },
                "atanhrho": j.atanhrho,
                "atanhrho_se": j.atanhrho_se,
                "atanhrho_wald_z": wz,
                "atanhrho_wald_p": wp,
                "rho": j.rho,
                "ln_sigma": j.ln_sigma,
                "log_likelihood": j.log_likelihood,
                "independent_log_likelihood": j.independent_log_likelihood,
                "converged": j.converged,
                "iterations": j.iterations,
                "score_max_norm": j.score_max_norm,
                "n_obs": j.n_obs,
                "n_clusters": j.n_clusters,
                "vcov": j.vcov_kind,
                "average_marginal_effects": ame,
            }),
        )
    }

    pub fn psm(&mut self) -> Result<()> {
        let cfg = self.cfg.psm.clone().context("no [psm] section configured")?;
        let panel = self.estimation_panel()?;
        require_columns(
            &panel,
            std::iter::once(cfg.treatment.as_str()).chain(cfg.covariates.iter().map(String::as_str)),
            "[psm]",
        )?;
        let m = propensity_match(&panel, &cfg.treatment, &cfg.covariates, cfg.caliper)?;
        let mut pairs = Table::new(["pair", "treated_row", "control_row", "distance"]);
        for (i, p) in m.pairs.iter().enumerate() {
            pairs.push(vec![i.to_string(), p.treated.to_string(), p.control.to_string(), num(p.distance)]);
        }
        let mut balance = Table::new([
            "covariate",
            "mean_treated_pre",
            "mean_control_pre",
            "smd_pre",
            "mean_treated_post",
            "mean_control_post",
            "smd_post",
        ]);
        for b in &m.balance {
            balance.push(vec![
                b.covariate.clone(),
                num(b.mean_treated_pre),
                num(b.mean_control_pre),
                num(b.smd_pre),
                num(b.mean_treated_post),
                num(b.mean_control_post),
                num(b.smd_post),
            ]);
        }
        self.out.write_table("psm_pairs.csv", &pairs)?;
        self.out.write_table("psm_balance.csv", &balance)?;
        self.out.write_bytes("psm_matched.csv", m.matched.to_csv_string()?.as_bytes())?;
        self.out.write_json(
            "psm.json",
            &json!({
                "pairs": m.pairs.len(),
                "unmatched_treated": m.unmatched_treated,
                "max_abs_smd_pre": m.max_abs_smd_pre(),
                "max_abs_smd_post": m.max_abs_smd_post(),
            }),
        )?;
        if let Some(name) = &cfg.model {
            let model = self.cfg.model(name)?.clone();
            let f = fit(&m.matched, &model.spec).with_context(|| format!("fitting `{name}` on the matched sample"))?;
            self.write_fit(&format!("fit_{name}_matched"), &model.spec, &f, &m.matched)?;
        }
        Ok(())
    }

    pub fn chow(&mut self) -> Result<()> {
        let cfg = self.cfg.chow.clone().context("no [chow] section configured")?;
        let model = self.cfg.model(&cfg.model)?.clone();
        let panel = self.estimation_panel()?;
        require_columns(&panel, model.spec.columns().into_iter().chain([cfg.group.as_str()]), "[chow]")?;
        let c = chow_test(&panel, &model.spec, &cfg.group)?;
        self.out.write_table("chow.csv", &coef_table(&c.terms))?;
        let mut summary = json!({
            "model": cfg.model,
            "group": cfg.group,
            "joint_chi2": c.joint_chi2,
            "joint_df": c.joint_df,
            "joint_p": c.joint_p,
        });
        if cfg.permutations > 0 {
            let seed = self.seed("permutation test")?;
            let p = permutation_test(&panel, &model.spec, &cfg.group, cfg.permutations, seed)?;
            let mut t = Table::new(["regressor", "observed_gap", "p_value"]);
            for term in &p.terms {
                t.push(vec![term.regressor.clone(), num(term.observed_gap), num(term.p_value)]);
            }
            self.out.write_table("permutation.csv", &t)?;
            summary["permutation"] = json!({ "replications": p.replications, "failed": p.failed, "seed": p.seed });
        }
        self.out.write_json("chow.json", &summary)
    }

    pub fn synth(&mut self) -> Result<()> {
        let dgp = self.dgp()?.context("no [synth] section configured")?;
        let s = generate_panel(&dgp)?;
        self.out.write_bytes("panel.csv", s.panel.to_csv_string()?.as_bytes())?;
        self.out.write_json("truth.json", &s.truth)?;
        if let Some(profile) = self.cfg.mpi.sample.clone() {
            let sample = generate_mpi_sample(&profile, dgp.seed)?;
            self.out.write_bytes("mpi_sample.csv", sample.to_csv_string()?.as_bytes())?;
        }
        Ok(())
    }

    pub fn report(&mut self) -> Result<()> {
        self.mpi().context("mpi")?;
        self.entropy().context("entropy")?;
        self.fit().context("fit")
    }

    /// Manifest with input digests, the effective configuration and every
    /// artifact written so far.
    pub fn manifest(&self, command: &str) -> Value {
        let mut cfg = self.cfg.clone();
        cfg.out = None;
        json!({
            "tool": env!("CARGO_PKG_NAME"),
            "version": env!("CARGO_PKG_VERSION"),
            "command": command,
            "seed": self.cfg.seed,
            "inputs": self.inputs,
            "config": cfg,
            "outputs": self.out.written(),
        })
    }
}

fn dimension_names(scheme: &IndicatorScheme) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for d in scheme.dimensions() {
        if !out.iter().any(|x| x == d.name()) {
            out.push(d.name().to_string());
        }
    }
    out
}

fn coef_table(rows: &[CoefRow]) -> Table {
    let mut t = Table::new(["name", "estimate", "se", "z", "p"]);
    for r in rows {
        t.push(vec![r.name.clone(), num(r.estimate), num(r.se), num(r.z), num(r.p)]);
    }
    t
}
