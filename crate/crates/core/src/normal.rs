//! Standard normal helpers. `inv_cdf` is Wichura's AS241 (about 1e-16
//! relative); `tail` is West's version of Hart's algorithm (1e-12 relative
//! inside ±4, 1e-8 beyond) and returns the smaller of Φ(z), 1 − Φ(z) without cancellation.

use libm::erfc;

pub const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

pub fn pdf(z: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * z * z).exp()
}

pub fn cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// Φ(−|z|).
#[inline]
pub fn tail(z: f64) -> f64 {
    let x = z.abs();
    if x > 37.0 {
        return 0.0;
    }
    let e = (-0.5 * x * x).exp();
    if x < 7.071_067_811_865_47 {
        let num = (((((3.526_249_659_989_11e-2 * x + 0.700_383_064_443_688) * x + 6.373_962_203_531_65) * x
            + 33.912_866_078_383)
            * x
            + 112.079_291_497_871)
            * x
            + 221.213_596_169_931)
            * x
            + 220.206_867_912_376;
        let den = ((((((8.838_834_764_831_84e-2 * x + 1.755_667_163_182_64) * x + 16.064_177_579_207) * x
            + 86.780_732_202_946_1)
            * x
            + 296.564_248_779_674)
            * x
            + 637.333_633_378_831)
            * x
            + 793.826_512_519_948)
            * x
            + 440.413_735_824_752;
        e * num / den
    } else {
        let b = x + 1.0 / (x + 2.0 / (x + 3.0 / (x + 4.0 / (x + 0.65))));
        e / b / 2.506_628_274_631
    }
}

#[inline]
fn poly(c: &[f64; 8], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &k| acc * x + k)
}

const A: [f64; 8] = [
    3.387_132_872_796_366_608,
    133.141_667_891_784_377_45,
    1_971.590_950_306_551_442_7,
    13_731.693_765_509_461_125,
    45_921.953_931_549_871_457,
    67_265.770_927_008_700_853,
    33_430.575_583_588_128_105,
    2_509.080_928_730_122_672_7,
];
const B: [f64; 8] = [
    1.0,
    42.313_330_701_600_911_252,
    687.187_007_492_057_908_3,
    5_394.196_021_424_751_107_7,
    21_213.794_301_586_595_867,
    39_307.895_800_092_710_61,
    28_729.085_735_721_942_674,
    5_226.495_278_852_545_925,
];
const C: [f64; 8] = [
    1.423_437_110_749_683_577_34,
    4.630_337_846_156_545_295_9,
    5.769_497_221_460_691_405_5,
    3.647_848_324_763_204_605_04,
    1.270_458_252_452_368_382_58,
    0.241_780_725_177_450_611_77,
    0.022_723_844_989_269_184_583_3,
    7.745_450_142_783_414_076_4e-4,
];
const D: [f64; 8] = [
    1.0,
    2.053_191_626_637_758_821_87,
    1.676_384_830_183_803_849_4,
    0.689_767_334_985_100_004_55,
    0.148_103_976_427_480_074_59,
    0.015_198_666_563_616_457_196_6,
    5.475_938_084_995_344_946e-4,
    1.050_750_071_644_416_843_24e-9,
];
const E: [f64; 8] = [
    6.657_904_643_501_103_777_2,
    5.463_784_911_164_114_369_9,
    1.784_826_539_917_291_335_8,
    0.296_560_571_828_504_891_23,
    0.026_532_189_526_576_123_093,
    0.001_242_660_947_388_078_438_6,
    2.711_555_568_743_487_578_15e-5,
    2.010_334_399_292_288_132_65e-7,
];
const F: [f64; 8] = [
    1.0,
    0.599_832_206_555_887_937_69,
    0.136_929_880_922_735_805_31,
    0.014_875_361_290_850_614_852_5,
    7.868_691_311_456_132_591e-4,
    1.846_318_317_510_054_681_8e-5,
    1.421_511_758_316_445_888_7e-7,
    2.044_263_103_389_939_785_64e-15,
];

/// Quantile of the standard normal. Returns ±inf at 0 and 1, NaN outside.
#[inline]
pub fn inv_cdf(p: f64) -> f64 {
    if !(0.0..=1.0).contains(&p) {
        return f64::NAN;
    }
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180_625 - q * q;
        return q * poly(&A, r) / poly(&B, r);
    }
    let small = if q < 0.0 { p } else { 1.0 - p };
    let z = inv_lower_tail(small);
    if q < 0.0 {
        z
    } else {
        -z
    }
}

/// Φ⁻¹(p) for p ≤ ½, taking the tail probability directly so upper-tail
/// callers can pass 1 − u without forming it.
#[inline]
pub fn inv_lower_tail(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p > 0.075 {
        return inv_cdf(p);
    }
    let r = (-p.ln()).sqrt();
    let x = if r <= 5.0 {
        let r = r - 1.6;
        poly(&C, r) / poly(&D, r)
    } else {
        let r = r - 5.0;
        poly(&E, r) / poly(&F, r)
    };
    -x
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cdf_values() {
        assert!((cdf(0.0) - 0.5).abs() < 1e-16);
        assert!((cdf(1.959_963_984_540_054) - 0.975).abs() < 1e-15);
        assert!((cdf(-3.0) - 0.001_349_898_031_630_094_6).abs() < 1e-17);
    }

    #[test]
    fn tail_matches_erfc() {
        for k in 0..4000 {
            let z = -10.0 + k as f64 * 0.005;
            let want = 0.5 * erfc(z.abs() / std::f64::consts::SQRT_2);
            let tol = if z.abs() < 4.0 { 1e-12 } else { 1e-8 };
            assert!(((tail(z) - want) / want).abs() < tol, "z={z}");
        }
    }

    #[test]
    fn quantile_values() {
        assert!((inv_cdf(0.975) - 1.959_963_984_540_054).abs() < 1e-15);
        assert!((inv_cdf(0.001) + 3.090_232_306_167_813_5).abs() < 1e-14);
        assert!((inv_cdf(1e-9) + 5.997_807_015_007_686).abs() < 1e-13);
        assert_eq!(inv_cdf(0.5), 0.0);
        assert_eq!(inv_cdf(0.0), f64::NEG_INFINITY);
        assert_eq!(inv_cdf(1.0), f64::INFINITY);
        assert!(inv_cdf(1.5).is_nan() && inv_cdf(f64::NAN).is_nan());
    }

    #[test]
    fn quantile_roundtrip() {
        for &p in &[1e-300, 1e-12, 1e-9, 1e-4, 0.01, 0.024, 0.07, 0.08, 0.3, 0.5, 0.77, 0.98, 1.0 - 1e-6, 1.0 - 1e-9] {
            let z = inv_cdf(p);
            let back = cdf(z);
            assert!(((back - p) / p.min(1.0 - p)).abs() < 1e-12, "p={p} back={back}");
        }
        for &p in &[1e-200, 1e-20, 1e-5, 0.05, 0.2] {
            assert!(((tail(inv_lower_tail(p)) - p) / p).abs() < 1e-8);
        }
    }
}
