//! Small numerical helpers shared by the estimators, the harness and the
//! data-ingestion code.

use crate::error::{Error, Result};

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Inverse of the standard normal CDF (Wichura's AS 241, PPND16), accurate
/// to about 1e-16 relative. Returns -inf/+inf at 0/1 and NaN outside [0, 1].
pub fn normal_quantile(p: f64) -> f64 {
    if !(0.0..=1.0).contains(&p) {
        return f64::NAN;
    }
    if p == 0.0 {
        return f64::NEG_INFINITY;
    }
    if p == 1.0 {
        return f64::INFINITY;
    }
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        return q
            * (((((((2.509_080_928_730_122_7e3 * r + 3.343_057_558_358_813e4) * r
                + 6.726_577_092_700_87e4)
                * r
                + 4.592_195_393_154_987e4)
                * r
                + 1.373_169_376_550_946e4)
                * r
                + 1.971_590_950_306_551_3e3)
                * r
                + 1.331_416_678_917_843_8e2)
                * r
                + 3.387_132_872_796_366_5)
            / (((((((5.226_495_278_852_854e3 * r + 2.872_908_573_572_194_3e4) * r
                + 3.930_789_580_009_271e4)
                * r
                + 2.121_379_430_158_659_7e4)
                * r
                + 5.394_196_021_424_751e3)
                * r
                + 6.871_870_074_920_579e2)
                * r
                + 4.231_333_070_160_091e1)
                * r
                + 1.0);
    }
    let tail = if q < 0.0 { p } else { 1.0 - p };
    let mut r = (-tail.ln()).sqrt();
    let value = if r <= 5.0 {
        r -= 1.6;
        (((((((7.745_450_142_783_414e-4 * r + 2.272_384_498_926_918_4e-2) * r
            + 2.417_807_251_774_506e-1)
            * r
            + 1.270_458_252_452_368_4)
            * r
            + 3.647_848_324_763_204_5)
            * r
            + 5.769_497_221_460_691)
            * r
            + 4.630_337_846_156_546)
            * r
            + 1.423_437_110_749_683_5)
            / (((((((1.050_750_071_644_416_9e-9 * r + 5.475_938_084_995_345e-4) * r
                + 1.519_866_656_361_645_7e-2)
                * r
                + 1.481_039_764_274_800_8e-1)
                * r
                + 6.897_673_349_851e-1)
                * r
                + 1.676_384_830_183_803_8)
                * r
                + 2.053_191_626_637_759)
                * r
                + 1.0)
    } else {
        r -= 5.0;
        (((((((2.010_334_399_292_288_1e-7 * r + 2.711_555_568_743_487_6e-5) * r
            + 1.242_660_947_388_078_4e-3)
            * r
            + 2.653_218_952_657_612_4e-2)
            * r
            + 2.965_605_718_285_048_7e-1)
            * r
            + 1.784_826_539_917_291_3)
            * r
            + 5.463_784_911_164_114)
            * r
            + 6.657_904_643_501_103)
            / (((((((2.044_263_103_389_939_7e-15 * r + 1.421_511_758_316_446e-7)
                * r
                + 1.846_318_317_510_054_8e-5)
                * r
                + 7.868_691_311_456_133e-4)
                * r
                + 1.487_536_129_085_061_5e-2)
                * r
                + 1.369_298_809_227_358e-1)
                * r
                + 5.998_322_065_558_88e-1)
                * r
                + 1.0)
    };
    if q < 0.0 {
        -value
    } else {
        value
    }
}

/// Two-sided critical value z_{alpha/2} for a `level` confidence interval.
pub fn two_sided_z(level: f64) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::invalid(format!("confidence level {level} is not in (0, 1)")));
    }
    Ok(normal_quantile(1.0 - (1.0 - level) / 2.0))
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// `n/(n-1) * (mean(z^2) - mean(z)^2)`, the variance estimator attached to
/// the split and doubly robust ATE estimates. Needs at least two values.
pub fn split_variance(zs: &[f64]) -> f64 {
    let n = zs.len() as f64;
    let m = mean(zs);
    let m2 = zs.iter().map(|z| z * z).sum::<f64>() / n;
    (n / (n - 1.0) * (m2 - m * m)).max(0.0)
}

/// Sample standard deviation with denominator n - 1.
pub fn sample_sd(xs: &[f64]) -> f64 {
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0)).sqrt()
}

pub fn sorted(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Quantile of sorted data by linear interpolation between order
/// statistics (position `(n - 1) q`).
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn median(xs: &[f64]) -> Result<f64> {
    if xs.is_empty() {
        return Err(Error::invalid("median of an empty list"));
    }
    Ok(quantile_sorted(&sorted(xs), 0.5))
}

/// Normal-consistent robust scale: interquartile range / 1.349.
pub fn robust_sd(xs: &[f64]) -> Result<f64> {
    if xs.is_empty() {
        return Err(Error::invalid("robust SD of an empty list"));
    }
    let s = sorted(xs);
    Ok((quantile_sorted(&s, 0.75) - quantile_sorted(&s, 0.25)) / 1.349)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    // 40-digit references: sqrt(2) * erfinv(2p - 1).
    const QUANTILES: &[(f64, f64)] = &[
        (0.975, 1.959_963_984_540_054_3),
        (0.995, 2.575_829_303_548_901),
        (0.9, 1.281_551_565_544_600_4),
        (0.999, 3.090_232_306_167_813_6),
        (1e-10, -6.361_340_902_404_057),
        (0.02425, -1.972_961_051_311_885),
        (0.3, -0.524_400_512_708_040_8),
        (0.5, 0.0),
    ];

    #[test]
    fn quantile_matches_reference() {
        for &(p, z) in QUANTILES {
            let got = normal_quantile(p);
            assert!((got - z).abs() < 1e-12 * z.abs().max(1.0), "p={p}: {got} vs {z}");
        }
        assert!(normal_quantile(-0.1).is_nan());
        assert_eq!(normal_quantile(0.0), f64::NEG_INFINITY);
    }

    #[test]
    fn cdf_inverts_quantile() {
        for i in 1..1000 {
            let p = i as f64 / 1000.0;
            assert!((normal_cdf(normal_quantile(p)) - p).abs() < 1e-13);
        }
    }

    #[test]
    fn z_values() {
        assert!((two_sided_z(0.95).unwrap() - 1.959_963_984_540_054).abs() < 1e-12);
        assert!((two_sided_z(0.99).unwrap() - 2.575_829_303_548_901).abs() < 1e-12);
        assert!(two_sided_z(1.0).is_err());
        assert!(two_sided_z(0.0).is_err());
    }

    #[test]
    fn split_variance_by_hand() {
        // (3/2) * (14/3 - 4) = 1
        assert!((split_variance(&[1.0, 2.0, 3.0]) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn order_statistics() {
        assert_eq!(median(&[1.0, 2.0, 3.0, 4.0]).unwrap(), 2.5);
        assert_eq!(median(&[5.0, 1.0, 3.0, 2.0, 4.0]).unwrap(), 3.0);
        assert_eq!(robust_sd(&[2.0; 7]).unwrap(), 0.0);
        assert!(median(&[]).is_err());
        assert!(robust_sd(&[]).is_err());
        // quartiles of 1..=5 are 2 and 4
        assert!((robust_sd(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap() - 2.0 / 1.349).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn split_variance_equals_textbook(zs in prop::collection::vec(-10.0f64..10.0, 2..200)) {
            let n = zs.len() as f64;
            let m = zs.iter().sum::<f64>() / n;
            let textbook = zs.iter().map(|z| (z - m).powi(2)).sum::<f64>() / (n - 1.0);
            let v = split_variance(&zs);
            prop_assert!((v - textbook).abs() <= 1e-10 * textbook.max(1e-300) || (v - textbook).abs() < 1e-13);
        }

        #[test]
        fn robust_sd_affine(
            v in prop::collection::vec(-100.0f64..100.0, 1..100),
            a in -50.0f64..50.0,
            b in -5.0f64..5.0,
        ) {
            let base = robust_sd(&v).unwrap();
            let moved: Vec<f64> = v.iter().map(|x| a + b * x).collect();
            let got = robust_sd(&moved).unwrap();
            prop_assert!((got - b.abs() * base).abs() < 1e-12 * (1.0 + b.abs() * base + a.abs()));
        }
    }
}
