//! Univariate and bivariate standard normal functions.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use libm::erfc;

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

pub fn pdf(x: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
}

pub fn cdf(x: f64) -> f64 {
    0.5 * erfc(-x * FRAC_1_SQRT_2)
}

/// `ln Phi(x)`, using the asymptotic tail series below -30.
pub fn ln_cdf(x: f64) -> f64 {
    if x > -30.0 {
        cdf(x).ln()
    } else {
        let z2 = 1.0 / (x * x);
        -0.5 * x * x - (-x).ln() - 0.5 * (2.0 * PI).ln() + (1.0 - z2 + 3.0 * z2 * z2 - 15.0 * z2 * z2 * z2).ln()
    }
}

/// Inverse Mills ratio `phi(x) / Phi(x)`.
pub fn mills(x: f64) -> f64 {
    if x > -30.0 {
        pdf(x) / cdf(x)
    } else {
        let z2 = 1.0 / (x * x);
        -x / (1.0 - z2 + 3.0 * z2 * z2 - 15.0 * z2 * z2 * z2)
    }
}

pub fn two_sided_p(z: f64) -> f64 {
    if z.is_nan() {
        return f64::NAN;
    }
    erfc(z.abs() * FRAC_1_SQRT_2)
}

/// Bivariate standard normal density with correlation `r`.
pub fn bvn_pdf(a: f64, b: f64, r: f64) -> f64 {
    let s2 = 1.0 - r * r;
    (-(a * a - 2.0 * r * a * b + b * b) / (2.0 * s2)).exp() / (2.0 * PI * s2.sqrt())
}

/// `P(X < a, Y < b)` for standard normals with correlation `r`.
pub fn bvn_cdf(a: f64, b: f64, r: f64) -> f64 {
    bvn_upper(-a, -b, r)
}

// Gauss-Legendre half-rules (nodes on (0, 1), weights) for 6, 12 and 20 points.
const GL6: [(f64, f64); 3] = [
    (0.932_469_514_203_152_2, 0.171_324_492_379_170_5),
    (0.661_209_386_466_264_7, 0.360_761_573_048_138_4),
    (0.238_619_186_083_197, 0.467_913_934_572_690_4),
];
const GL12: [(f64, f64); 6] = [
    (0.981_560_634_246_719_1, 0.047_175_336_386_511_77),
    (0.904_117_256_370_475, 0.106_939_325_995_318_3),
    (0.769_902_674_194_305, 0.160_078_328_543_346_4),
    (0.587_317_954_286_617_1, 0.203_167_426_723_065_9),
    (0.367_831_498_998_180_2, 0.233_492_536_538_354_7),
    (0.125_233_408_511_469_2, 0.249_147_045_813_402_9),
];
const GL20: [(f64, f64); 10] = [
    (0.993_128_599_185_094_9, 0.017_614_007_139_152_12),
    (0.963_971_927_277_913_8, 0.040_601_429_800_386_94),
    (0.912_234_428_251_326, 0.062_672_048_334_109_06),
    (0.839_116_971_822_218_8, 0.083_276_741_576_704_75),
    (0.746_331_906_460_150_8, 0.101_930_119_817_240_4),
    (0.636_053_680_726_515, 0.118_194_531_961_518_4),
    (0.510_867_001_950_827_1, 0.131_688_638_449_176_6),
    (0.373_706_088_715_419_6, 0.142_096_109_318_382_1),
    (0.227_785_851_141_645_1, 0.149_172_986_472_603_7),
    (0.076_526_521_133_497_33, 0.152_753_387_130_725_9),
];

/// `P(X > h, Y > k)`, Drezner-Wesolowsky with Genz's refinements.
fn bvn_upper(h: f64, k: f64, r: f64) -> f64 {
    if h == f64::INFINITY || k == f64::INFINITY {
        return 0.0;
    }
    if h == f64::NEG_INFINITY {
        return if k == f64::NEG_INFINITY { 1.0 } else { cdf(-k) };
    }
    if k == f64::NEG_INFINITY {
        return cdf(-h);
    }
    if r == 0.0 {
        return cdf(-h) * cdf(-k);
    }
    let two_pi = 2.0 * PI;
    let rule: &[(f64, f64)] = if r.abs() < 0.3 {
        &GL6
    } else if r.abs() < 0.75 {
        &GL12
    } else {
        &GL20
    };
    // Symmetric nodes 1 - x and 1 + x on (0, 2).
    let nodes = rule
        .iter()
        .flat_map(|&(x, w)| [(1.0 - x, w), (1.0 + x, w)]);

    let mut hk = h * k;
    let bvn;
    if r.abs() < 0.925 {
        let hs = 0.5 * (h * h + k * k);
        let asr = 0.5 * r.asin();
        let sum: f64 = nodes
            .map(|(x, w)| {
                let sn = (asr * x).sin();
                w * ((sn * hk - hs) / (1.0 - sn * sn)).exp()
            })
            .sum();
        bvn = sum * asr / two_pi + cdf(-h) * cdf(-k);
    } else {
        let mut k = k;
        if r < 0.0 {
            k = -k;
            hk = -hk;
        }
        let mut acc = 0.0;
        if r.abs() < 1.0 {
            let as_ = 1.0 - r * r;
            let a = as_.sqrt();
            let bs = (h - k) * (h - k);
            let c = (4.0 - hk) / 8.0;
            let d = (12.0 - hk) / 80.0;
            let asr = -0.5 * (bs / as_ + hk);
            if asr > -100.0 {
                acc = a * asr.exp() * (1.0 - c * (bs - as_) * (1.0 - d * bs) / 3.0 + c * d * as_ * as_);
            }
            if hk > -100.0 {
                let b = bs.sqrt();
                let sp = two_pi.sqrt() * cdf(-b / a);
                acc -= (-0.5 * hk).exp() * sp * b * (1.0 - c * bs * (1.0 - d * bs) / 3.0);
            }
            let a = 0.5 * a;
            let sum: f64 = nodes
                .filter_map(|(x, w)| {
                    let xs = (a * x) * (a * x);
                    let asr = -0.5 * (bs / xs + hk);
                    if asr <= -100.0 {
                        return None;
                    }
                    let sp = 1.0 + c * xs * (1.0 + 5.0 * d * xs);
                    let rs = (1.0 - xs).sqrt();
                    let ep = (-0.5 * hk * xs / ((1.0 + rs) * (1.0 + rs))).exp() / rs;
                    Some(w * asr.exp() * (sp - ep))
                })
                .sum();
            acc = (a * sum - acc) / two_pi;
        }
        bvn = if r > 0.0 {
            acc + cdf(-h.max(k))
        } else if h >= k {
            -acc
        } else {
            let l = if h < 0.0 { cdf(k) - cdf(h) } else { cdf(-h) - cdf(-k) };
            l - acc
        };
    }
    bvn.clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent route: integrate phi(x) Phi((b - r x) / sqrt(1 - r^2)) over
    /// (-inf, a] with composite Simpson on a fine grid.
    fn bvn_quadrature(a: f64, b: f64, r: f64) -> f64 {
        let lo = -12.0;
        if a <= lo {
            return 0.0;
        }
        let s = (1.0 - r * r).sqrt();
        let n = 20_000;
        let h = (a - lo) / n as f64;
        let f = |x: f64| pdf(x) * cdf((b - r * x) / s);
        let mut acc = f(lo) + f(a);
        for i in 1..n {
            let x = lo + i as f64 * h;
            acc += if i % 2 == 1 { 4.0 } else { 2.0 } * f(x);
        }
        acc * h / 3.0
    }

    #[test]
    fn univariate_identities() {
        assert!((cdf(0.0) - 0.5).abs() < 1e-16);
        assert!((cdf(1.959_963_984_540_054) - 0.975).abs() < 1e-13);
        assert!((ln_cdf(-40.0) - ln_cdf(-40.0 + 1e-9)).abs() < 1e-6);
        assert!((ln_cdf(-29.0) - cdf(-29.0).ln()).abs() < 1e-10);
        assert!((ln_cdf(-30.0 - 1e-12) - ln_cdf(-30.0 + 1e-12)).abs() < 1e-8);
        assert!((mills(-30.0 - 1e-12) - mills(-30.0 + 1e-12)).abs() < 1e-8);
        assert!(ln_cdf(-200.0).is_finite());
        assert!((two_sided_p(1.959_963_984_540_054) - 0.05).abs() < 1e-14);
    }

    #[test]
    fn bvn_special_cases() {
        for r in [-0.95f64, -0.5, -0.1, 0.2, 0.6, 0.8, 0.99] {
            let expected = 0.25 + r.asin() / (2.0 * PI);
            assert!((bvn_cdf(0.0, 0.0, r) - expected).abs() < 1e-14, "r={r}");
        }
        assert!((bvn_cdf(0.3, -1.1, 0.0) - cdf(0.3) * cdf(-1.1)).abs() < 1e-16);
        assert_eq!(bvn_cdf(f64::NEG_INFINITY, 1.0, 0.4), 0.0);
        assert!((bvn_cdf(f64::INFINITY, 1.0, 0.4) - cdf(1.0)).abs() < 1e-16);
    }

    #[test]
    fn bvn_matches_quadrature() {
        let pts = [-2.5, -1.0, -0.2, 0.0, 0.7, 1.5, 3.0];
        for &r in &[-0.97, -0.8, -0.5, -0.2, 0.1, 0.4, 0.74, 0.76, 0.9, 0.93, 0.99] {
            for &a in &pts {
                for &b in &pts {
                    let got = bvn_cdf(a, b, r);
                    let want = bvn_quadrature(a, b, r);
                    assert!((got - want).abs() < 1e-10, "a={a} b={b} r={r}: {got} vs {want}");
                }
            }
        }
    }

    #[test]
    fn bvn_partials_by_differences() {
        // d/da Phi2 = phi(a) Phi((b - r a)/s), d/dr Phi2 = phi2(a, b, r)
        let (a, b, r) = (0.4, -0.7, 0.55f64);
        let s = (1.0 - r * r).sqrt();
        let h = 1e-5;
        let da = (bvn_cdf(a + h, b, r) - bvn_cdf(a - h, b, r)) / (2.0 * h);
        assert!((da - pdf(a) * cdf((b - r * a) / s)).abs() < 1e-8);
        let dr = (bvn_cdf(a, b, r + h) - bvn_cdf(a, b, r - h)) / (2.0 * h);
        assert!((dr - bvn_pdf(a, b, r)).abs() < 1e-8);
    }
}
