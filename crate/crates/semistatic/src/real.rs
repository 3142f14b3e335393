//! Scalar abstraction and Gaussian special functions.
//!
//! The closed-form pricing and regression mathematics is generic over a
//! floating-point scalar so the same formulas run in `f32` or `f64`.
//! Simulation and the experiment drivers instantiate everything at `f64`;
//! see the aliases at the crate root.

use num_traits::{Float, FromPrimitive};
use std::fmt::{Debug, Display};
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

/// Floating-point scalar: `f32` or `f64`.
pub trait Real:
    Float
    + FromPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
}

impl<T> Real for T where
    T: Float
        + FromPrimitive
        + AddAssign
        + SubAssign
        + MulAssign
        + DivAssign
        + Debug
        + Display
        + Send
        + Sync
        + 'static
{
}

/// Converts an `f64` literal into the working scalar.
#[inline]
pub(crate) fn lit<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("f64 literal must convert into the scalar type")
}

/// Standard normal density.
#[inline]
pub fn norm_pdf<T: Real>(x: T) -> T {
    // 1/sqrt(2*pi)
    lit::<T>(0.398_942_280_401_432_7) * (-x * x / lit(2.0)).exp()
}

/// Standard normal cumulative distribution function.
///
/// Hart's rational approximation (double-precision branch), accurate to
/// about 1e-15 in `f64`.
pub fn norm_cdf<T: Real>(x: T) -> T {
    let xabs = x.abs();
    let cum = if xabs > lit(37.0) {
        T::zero()
    } else {
        let e = (-xabs * xabs / lit(2.0)).exp();
        if xabs < lit(7.071_067_811_865_47) {
            const NUM: [f64; 6] = [
                3.526_249_659_989_11e-2,
                0.700_383_064_443_688,
                6.373_962_203_531_65,
                33.912_866_078_383,
                112.079_291_497_871,
                221.213_596_169_931,
            ];
            const NUM_LAST: f64 = 220.206_867_912_376;
            const DEN: [f64; 7] = [
                8.838_834_764_831_84e-2,
                1.755_667_163_182_64,
                16.064_177_579_207,
                86.780_732_202_946_1,
                296.564_248_779_674,
                637.333_633_378_831,
                793.826_512_519_948,
            ];
            const DEN_LAST: f64 = 440.413_735_824_752;
            let mut num = lit::<T>(NUM[0]);
            for &c in &NUM[1..] {
                num = num * xabs + lit(c);
            }
            num = num * xabs + lit(NUM_LAST);
            let mut den = lit::<T>(DEN[0]);
            for &c in &DEN[1..] {
                den = den * xabs + lit(c);
            }
            den = den * xabs + lit(DEN_LAST);
            e * num / den
        } else {
            let mut build = xabs + lit(0.65);
            build = xabs + lit::<T>(4.0) / build;
            build = xabs + lit::<T>(3.0) / build;
            build = xabs + lit::<T>(2.0) / build;
            build = xabs + T::one() / build;
            e / build / lit(2.506_628_274_631)
        }
    };
    if x > T::zero() {
        T::one() - cum
    } else {
        cum
    }
}

/// Inverse of the standard normal CDF (Wichura's AS 241, PPND16).
///
/// Relative accuracy is about 1e-15 over (0, 1); used to turn uniform
/// 64-bit draws into normal variates so simulations reproduce bit-exactly
/// across platforms.
pub fn inv_norm_cdf(p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "inverse normal CDF requires p in (0,1)");

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
        5_226.495_278_852_545_703,
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

    fn poly(coeffs: &[f64; 8], r: f64) -> f64 {
        coeffs.iter().rev().fold(0.0, |acc, &c| acc * r + c)
    }

    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180_625 - q * q;
        return q * poly(&A, r) / poly(&B, r);
    }
    let r = if q < 0.0 { p } else { 1.0 - p };
    let r = (-r.ln()).sqrt();
    let val = if r <= 5.0 {
        let r = r - 1.6;
        poly(&C, r) / poly(&D, r)
    } else {
        let r = r - 5.0;
        poly(&E, r) / poly(&F, r)
    };
    if q < 0.0 {
        -val
    } else {
        val
    }
}

/// Maps a raw 64-bit draw to the open interval (0, 1). Forcing the low
/// mantissa bit keeps both endpoints strictly excluded.
#[inline]
pub(crate) fn u64_to_open01(u: u64) -> f64 {
    (((u >> 11) | 1) as f64) * (1.0 / (1u64 << 53) as f64)
}

/// Standard normal variate from a raw 64-bit draw via the inverse CDF.
#[inline]
pub(crate) fn normal_from_u64(u: u64) -> f64 {
    inv_norm_cdf(u64_to_open01(u))
}

/// Derives an independent subseed for a named stream (SplitMix64 step).
/// Keeps training, bound-estimation and hedging draws disjoint.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed
        .wrapping_add(stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
