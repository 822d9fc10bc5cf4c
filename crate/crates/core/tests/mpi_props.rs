use mdpov::mpi::{
    compute_mpi, evaluate_deprivations, incidence_curve, k_grid, subgroup_decompose, DeprivationMatrix, IndicatorScheme,
};
use mdpov::synth::{generate_mpi_sample, MpiGroup, MpiProfile};
use proptest::prelude::*;

/// Float re-implementation: scores from f64 weights, identification with a
/// small tolerance in place of exact arithmetic.
fn oracle(rows: &[Vec<u8>], weights: &[f64], k: f64) -> (f64, f64, f64) {
    let n = rows.len() as f64;
    let scores: Vec<f64> = rows
        .iter()
        .map(|r| r.iter().zip(weights).map(|(&g, w)| f64::from(g) * w).sum())
        .collect();
    let poor: Vec<f64> = scores.into_iter().filter(|&c| c >= k - 1e-12).collect();
    let h = poor.len() as f64 / n;
    let m0 = poor.iter().sum::<f64>() / n;
    let a = if poor.is_empty() { 0.0 } else { poor.iter().sum::<f64>() / poor.len() as f64 };
    (h, a, m0)
}

fn scheme(with_income: bool) -> IndicatorScheme {
    if with_income {
        IndicatorScheme::with_income()
    } else {
        IndicatorScheme::baseline()
    }
}

fn matrix_strategy() -> impl Strategy<Value = (bool, Vec<Vec<u8>>)> {
    any::<bool>().prop_flat_map(|inc| {
        let d = if inc { 12 } else { 11 };
        (Just(inc), prop::collection::vec(prop::collection::vec(0u8..=1, d), 1..120))
    })
}

proptest! {
    #[test]
    fn matches_float_oracle((inc, rows) in matrix_strategy(), k in prop::sample::select(vec![0.2, 0.33, 0.4, 0.5, 1.0])) {
        let s = scheme(inc);
        let m = DeprivationMatrix::from_rows(&rows).unwrap();
        let r = compute_mpi(&m, &s, k).unwrap();
        let (h, a, m0) = oracle(&rows, &s.weights(), k);
        prop_assert!((r.h - h).abs() < 1e-12);
        prop_assert!((r.a - a).abs() < 1e-12);
        prop_assert!((r.m0 - m0).abs() < 1e-12);
        prop_assert!((r.m0 - r.h * r.a).abs() < 1e-12);
    }

    #[test]
    fn headcount_is_monotone_in_k((inc, rows) in matrix_strategy()) {
        let s = scheme(inc);
        let m = DeprivationMatrix::from_rows(&rows).unwrap();
        let curve = incidence_curve(&m, &s, &k_grid(0.05).unwrap()).unwrap();
        for w in curve.windows(2) {
            prop_assert!(w[1].h <= w[0].h);
            prop_assert!(w[1].m0 <= w[0].m0 + 1e-15);
        }
        for p in &curve {
            let r = compute_mpi(&m, &s, p.k).unwrap();
            prop_assert_eq!((r.h, r.a, r.m0), (p.h, p.a, p.m0));
        }
    }

    #[test]
    fn decomposition_is_exact((inc, rows) in matrix_strategy(), seed in any::<u64>(), groups in 1usize..5) {
        let s = scheme(inc);
        let m = DeprivationMatrix::from_rows(&rows).unwrap();
        let labels: Vec<String> = (0..rows.len())
            .map(|i| format!("g{}", (seed.wrapping_mul(i as u64 + 1) >> 7) % groups as u64))
            .collect();
        let d = subgroup_decompose(&m, &s, 0.33, &labels).unwrap();
        prop_assert!((d.share_weighted_m0() - d.total.m0).abs() < 1e-12);
    }

    #[test]
    fn contributions_sum_to_one((inc, rows) in matrix_strategy()) {
        let s = scheme(inc);
        let m = DeprivationMatrix::from_rows(&rows).unwrap();
        let r = compute_mpi(&m, &s, 0.33).unwrap();
        if let Some(c) = &r.contributions {
            let ind: f64 = c.indicators.iter().map(|x| x.share).sum();
            let dim: f64 = c.dimensions.iter().map(|x| x.share).sum();
            prop_assert!((ind - 1.0).abs() < 1e-12);
            prop_assert!((dim - 1.0).abs() < 1e-12);
            let m0j: f64 = r.indicator_m0(&s).iter().sum();
            prop_assert!((m0j - r.m0).abs() < 1e-12);
        } else {
            prop_assert_eq!(r.m0, 0.0);
        }
    }
}

/// `E[c 1(c >= k)]` and `P(c >= k)` over every deprivation pattern.
fn expectation(rates: &[f64], weights: &[f64], k: f64) -> (f64, f64) {
    let d = rates.len();
    let (mut em0, mut eh) = (0.0, 0.0);
    for pattern in 0u32..(1 << d) {
        let mut p = 1.0;
        let mut c = 0.0;
        for j in 0..d {
            if pattern >> j & 1 == 1 {
                p *= rates[j];
                c += weights[j];
            } else {
                p *= 1.0 - rates[j];
            }
        }
        if c >= k - 1e-12 {
            em0 += p * c;
            eh += p;
        }
    }
    (em0, eh)
}

#[test]
fn sample_m0_matches_bernoulli_expectation() {
    let rates = [0.3, 0.1, 0.2, 0.15, 0.25, 0.4, 0.35, 0.2, 0.3, 0.05, 0.45, 0.2];
    let n = 20_000;
    let panel = generate_mpi_sample(&MpiProfile::independent(n, rates), 11).unwrap();
    for (s, r) in [(IndicatorScheme::baseline(), &rates[..11]), (IndicatorScheme::with_income(), &rates[..])] {
        let m = evaluate_deprivations(&panel, &s).unwrap();
        for k in [0.2, 0.33, 0.4] {
            let got = compute_mpi(&m, &s, k).unwrap();
            let (em0, eh) = expectation(r, &s.weights(), k);
            let se_h = (eh * (1.0 - eh) / n as f64).sqrt();
            assert!((got.h - eh).abs() < 4.0 * se_h, "H {} vs {eh} at k={k}", got.h);
            // c <= 1, so the per-household variance is at most E[c^2] <= E[c].
            let se_m0 = (em0 / n as f64).sqrt();
            assert!((got.m0 - em0).abs() < 4.0 * se_m0, "M0 {} vs {em0} at k={k}", got.m0);
        }
    }
}

#[test]
fn empirical_rates_within_three_se() {
    let profile = MpiProfile {
        n_households: 6000,
        groups: vec![
            MpiGroup { label: "rural".into(), share: 0.6, rates: vec![0.4; 12] },
            MpiGroup { label: "urban".into(), share: 0.4, rates: vec![0.1; 12] },
        ],
    };
    let panel = generate_mpi_sample(&profile, 5).unwrap();
    let s = IndicatorScheme::with_income();
    let m = evaluate_deprivations(&panel, &s).unwrap();
    let group = panel.column("group").unwrap();
    for (g, spec) in profile.groups.iter().enumerate() {
        let rows: Vec<usize> = (0..m.nrows()).filter(|&i| group[i] == g as f64).collect();
        let n = rows.len() as f64;
        for (j, &p) in spec.rates.iter().enumerate() {
            let hat = rows.iter().map(|&i| f64::from(m.get(i, j))).sum::<f64>() / n;
            let se = (p * (1.0 - p) / n).sqrt();
            assert!((hat - p).abs() < 3.5 * se, "group {g} indicator {j}: {hat} vs {p}");
        }
    }
}
