//! Normal, Student t and chi-square distribution functions.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use super::special::{erfc, gamma_q, inc_beta, ln_gamma};
use crate::error::{Error, Result};

pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Standard normal cumulative distribution function.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x * FRAC_1_SQRT_2)
}

/// Standard normal upper tail `P(Z > x)`, accurate far into the tail.
pub fn normal_sf(x: f64) -> f64 {
    0.5 * erfc(x * FRAC_1_SQRT_2)
}

/// Standard normal quantile (Wichura's AS 241, about 1e-16 relative accuracy).
pub fn normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!("normal quantile needs p in (0,1), got {p}")));
    }
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        let num = (((((((2509.080_928_730_122_7 * r + 33430.575_583_588_128) * r
            + 67265.770_927_008_700)
            * r
            + 45921.953_931_549_871)
            * r
            + 13731.693_765_509_461)
            * r
            + 1971.590_950_306_551_3)
            * r
            + 133.141_667_891_784_38)
            * r
            + 3.387_132_872_796_366_5)
            * q;
        let den = ((((((5226.495_278_852_545_5 * r + 28729.085_735_721_943) * r
            + 39307.895_800_092_710)
            * r
            + 21213.794_301_586_595)
            * r
            + 5394.196_021_424_751_1)
            * r
            + 687.187_007_492_057_91)
            * r
            + 42.313_330_701_600_911)
            * r
            + 1.0;
        return Ok(num / den);
    }
    let r = if q < 0.0 { p } else { 1.0 - p };
    let r = (-r.ln()).sqrt();
    let val = if r <= 5.0 {
        let r = r - 1.6;
        let num = ((((((7.745_450_142_783_414_1e-4 * r + 0.022_723_844_989_269_184) * r
            + 0.241_780_725_177_450_61)
            * r
            + 1.270_458_252_452_368_4)
            * r
            + 3.647_848_324_763_204_5)
            * r
            + 5.769_497_221_460_691_4)
            * r
            + 4.630_337_846_156_545_3)
            * r
            + 1.423_437_110_749_683_5;
        let den = ((((((1.050_750_071_644_416_9e-9 * r + 5.475_938_084_995_344_9e-4) * r
            + 0.015_198_666_563_616_457)
            * r
            + 0.148_103_976_427_480_07)
            * r
            + 0.689_767_334_985_100_04)
            * r
            + 1.676_384_830_183_803_8)
            * r
            + 2.053_191_626_637_758_8)
            * r
            + 1.0;
        num / den
    } else {
        let r = r - 5.0;
        let num = ((((((2.010_334_399_292_288_1e-7 * r + 2.711_555_568_743_487_6e-5) * r
            + 1.242_660_947_388_078_4e-3)
            * r
            + 0.026_532_189_526_576_123)
            * r
            + 0.296_560_571_828_504_89)
            * r
            + 1.784_826_539_917_291_3)
            * r
            + 5.463_784_911_164_114_4)
            * r
            + 6.657_904_643_501_103_8;
        let den = ((((((2.044_263_103_389_939_7e-15 * r + 1.421_511_758_316_445_9e-7) * r
            + 1.846_318_317_510_054_8e-5)
            * r
            + 7.868_691_311_456_132_6e-4)
            * r
            + 0.014_875_361_290_850_615)
            * r
            + 0.136_929_880_922_735_81)
            * r
            + 0.599_832_206_555_887_94)
            * r
            + 1.0;
        num / den
    };
    Ok(if q < 0.0 { -val } else { val })
}

fn check_df(df: f64) -> Result<()> {
    if df > 0.0 && df.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("degrees of freedom must be positive, got {df}")))
    }
}

/// Student t density.
pub fn t_pdf(x: f64, df: f64) -> f64 {
    let ln = ln_gamma((df + 1.0) / 2.0)
        - ln_gamma(df / 2.0)
        - 0.5 * (df * PI).ln()
        - (df + 1.0) / 2.0 * (1.0 + x * x / df).ln();
    ln.exp()
}

/// Student t upper tail `P(T > x)`.
pub fn t_sf(x: f64, df: f64) -> Result<f64> {
    check_df(df)?;
    if x.is_nan() {
        return Err(Error::Domain("t statistic is NaN".into()));
    }
    let tail = 0.5 * inc_beta(df / 2.0, 0.5, df / (df + x * x));
    Ok(if x > 0.0 { tail } else { 1.0 - tail })
}

/// Student t cumulative distribution function.
pub fn t_cdf(x: f64, df: f64) -> Result<f64> {
    t_sf(-x, df)
}

/// Two-sided p-value `P(|T| > |t|)`.
pub fn t_two_sided_p(t: f64, df: f64) -> Result<f64> {
    check_df(df)?;
    Ok(inc_beta(df / 2.0, 0.5, df / (df + t * t)).min(1.0))
}

/// Student t quantile; inverts [`t_cdf`] by safeguarded Newton iteration.
pub fn t_quantile(p: f64, df: f64) -> Result<f64> {
    check_df(df)?;
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!("t quantile needs p in (0,1), got {p}")));
    }
    if p == 0.5 {
        return Ok(0.0);
    }
    // Work in the upper half and mirror.
    let (target, sign) = if p > 0.5 { (1.0 - p, 1.0) } else { (p, -1.0) };
    // target = P(T > x) for x > 0
    let mut lo = 0.0;
    let mut hi = normal_quantile(1.0 - target)?.max(1.0);
    while t_sf(hi, df)? > target {
        lo = hi;
        hi *= 2.0;
        if hi > 1e300 {
            return Err(Error::Domain("t quantile bracket overflow".into()));
        }
    }
    let mut x = 0.5 * (lo + hi);
    for _ in 0..200 {
        let f = t_sf(x, df)? - target;
        if f > 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let step = f / t_pdf(x, df);
        let mut next = x + step;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = 0.5 * (lo + hi);
        }
        if (next - x).abs() <= 1e-14 * x.abs().max(1.0) {
            x = next;
            break;
        }
        x = next;
    }
    Ok(sign * x)
}

/// Chi-square survival function `P(X > x)`.
pub fn chisq_sf(x: f64, df: f64) -> Result<f64> {
    check_df(df)?;
    if !(x >= 0.0) {
        return Err(Error::Domain(format!("chi-square statistic must be >= 0, got {x}")));
    }
    Ok(gamma_q(df / 2.0, x / 2.0))
}

pub fn chisq_cdf(x: f64, df: f64) -> Result<f64> {
    Ok(1.0 - chisq_sf(x, df)?)
}
