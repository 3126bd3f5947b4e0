//! Kruskal-Wallis rank test with a chi-square tail approximation.

use serde::{Deserialize, Serialize};

use super::metrics::midranks;
use crate::error::{Error, Result};
use crate::preprocess::FeatureMatrix;

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// ln Γ(x) for x > 0.
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // Reflection.
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = LANCZOS[0];
    let t = x + LANCZOS_G + 0.5;
    for (i, &c) in LANCZOS.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

const EPS: f64 = 1e-16;
const MAX_TERMS: usize = 10_000;

fn lower_series(a: f64, x: f64) -> f64 {
    let mut term = 1.0 / a;
    let mut sum = term;
    let mut ap = a;
    for _ in 0..MAX_TERMS {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if term.abs() < sum.abs() * EPS {
            break;
        }
    }
    sum * (-x + a * x.ln() - ln_gamma(a)).exp()
}

fn upper_fraction(a: f64, x: f64) -> f64 {
    // Modified Lentz.
    let tiny = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / tiny;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..MAX_TERMS {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < tiny {
            d = tiny;
        }
        c = b + an / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < EPS {
            break;
        }
    }
    (-x + a * x.ln() - ln_gamma(a)).exp() * h
}

/// Regularized upper incomplete gamma Q(a, x).
pub fn gamma_q(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        1.0
    } else if x < a + 1.0 {
        1.0 - lower_series(a, x)
    } else {
        upper_fraction(a, x)
    }
}

/// P(X > x) for X ~ χ²(df).
pub fn chi2_sf(x: f64, df: f64) -> f64 {
    gamma_q(df / 2.0, x / 2.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KruskalWallisTest {
    pub h: f64,
    pub df: usize,
    pub p_value: f64,
}

/// H statistic with midranks and tie correction; p from χ²(k−1).
pub fn kruskal_wallis(groups: &[&[f64]]) -> Result<KruskalWallisTest> {
    if groups.len() < 2 {
        return Err(Error::InvalidArgument("need at least two groups".into()));
    }
    if groups.iter().any(|g| g.is_empty()) {
        return Err(Error::InvalidArgument("empty group".into()));
    }
    let all: Vec<f64> = groups.iter().flat_map(|g| g.iter().copied()).collect();
    if all.iter().any(|v| v.is_nan()) {
        return Err(Error::NonFinite("feature values".into()));
    }
    let n = all.len() as f64;
    let ranks = midranks(&all);
    let mut offset = 0;
    let mut sum = 0.0;
    for g in groups {
        let r: f64 = ranks[offset..offset + g.len()].iter().sum();
        sum += r * r / g.len() as f64;
        offset += g.len();
    }
    let h_raw = 12.0 / (n * (n + 1.0)) * sum - 3.0 * (n + 1.0);

    let mut sorted = all;
    sorted.sort_by(f64::total_cmp);
    let mut ties = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let j = sorted[i..].iter().take_while(|&&v| v == sorted[i]).count();
        ties += (j * j * j - j) as f64;
        i += j;
    }
    let correction = 1.0 - ties / (n * n * n - n);
    let df = groups.len() - 1;
    if correction <= 0.0 {
        return Ok(KruskalWallisTest {
            h: 0.0,
            df,
            p_value: 1.0,
        });
    }
    let h = (h_raw / correction).max(0.0);
    let p_value = chi2_sf(h, df as f64).clamp(f64::MIN_POSITIVE, 1.0);
    Ok(KruskalWallisTest { h, df, p_value })
}

/// Splits `values` by label and tests the two classes.
pub fn kruskal_wallis_by_label(values: &[f64], labels: &[bool]) -> Result<KruskalWallisTest> {
    let (pos, neg): (Vec<f64>, Vec<f64>) = {
        let mut p = Vec::new();
        let mut q = Vec::new();
        for (&v, &l) in values.iter().zip(labels) {
            if l {
                p.push(v);
            } else {
                q.push(v);
            }
        }
        (p, q)
    };
    kruskal_wallis(&[&neg, &pos])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureTest {
    pub feature: String,
    pub h: f64,
    pub p_value: f64,
    pub significant: bool,
}

/// Per-feature tests of every column against the labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KruskalWallisResult {
    pub alpha: f64,
    pub features: Vec<FeatureTest>,
}

impl KruskalWallisResult {
    pub fn significant_columns(&self) -> Vec<usize> {
        self.features
            .iter()
            .enumerate()
            .filter(|(_, f)| f.significant)
            .map(|(i, _)| i)
            .collect()
    }
}

pub fn feature_screen(m: &FeatureMatrix, alpha: f64) -> Result<KruskalWallisResult> {
    let features = (0..m.n_cols())
        .map(|c| {
            let t = kruskal_wallis_by_label(&m.column(c), &m.labels)?;
            Ok(FeatureTest {
                feature: m.columns[c].name.clone(),
                h: t.h,
                p_value: t.p_value,
                significant: t.p_value < alpha,
            })
        })
        .collect::<Result<_>>()?;
    Ok(KruskalWallisResult { alpha, features })
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    #[test]
    fn hand_example() {
        let t = kruskal_wallis(&[&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]]).unwrap();
        assert!((t.h - 27.0 / 7.0).abs() < 1e-12);
        assert!((t.p_value - 0.0495).abs() < 1e-3);
        assert_eq!(t.df, 1);
    }

    #[test]
    fn identical_groups_and_all_ties() {
        let t = kruskal_wallis(&[&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]]).unwrap();
        assert!(t.h.abs() < 1e-12);
        assert!((t.p_value - 1.0).abs() < 1e-12);
        let t = kruskal_wallis(&[&[5.0, 5.0], &[5.0]]).unwrap();
        assert_eq!((t.h, t.p_value), (0.0, 1.0));
    }

    #[test]
    fn errors() {
        assert!(kruskal_wallis(&[&[1.0]]).is_err());
        assert!(kruskal_wallis(&[&[1.0], &[]]).is_err());
    }

    #[test]
    fn chi_square_tail_matches_reference() {
        for df in [1.0, 2.0, 3.0, 5.0, 10.0, 39.0] {
            let reference = ChiSquared::new(df).unwrap();
            for x in [0.01, 0.5, 1.0, 3.841, 7.0, 20.0, 60.0] {
                let want = 1.0 - reference.cdf(x);
                assert!((chi2_sf(x, df) - want).abs() < 1e-10, "df={df} x={x}");
            }
        }
        // Table values: 95th percentiles.
        assert!((chi2_sf(3.841_458_820_694_124, 1.0) - 0.05).abs() < 1e-10);
        assert!((chi2_sf(5.991_464_547_107_979, 2.0) - 0.05).abs() < 1e-10);
    }

    #[test]
    fn ln_gamma_values() {
        assert!(ln_gamma(1.0).abs() < 1e-13);
        assert!((ln_gamma(5.0) - 24f64.ln()).abs() < 1e-12);
        assert!((ln_gamma(0.5) - std::f64::consts::PI.sqrt().ln()).abs() < 1e-12);
    }
}
