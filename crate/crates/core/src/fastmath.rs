//! Branch-free `exp` for `f32` that the compiler can vectorize over slices.

const LOG2E: f32 = std::f32::consts::LOG2_E;
const LN2_HI: f32 = 0.693_359_4;
const LN2_LO: f32 = -2.121_944_4e-4;
/// `1.5 * 2^23`: adding it rounds a float of modest size to an integer.
const ROUND_MAGIC: f32 = 12_582_912.0;

/// `e^x` with a relative error below 3e-7. Inputs are clamped to
/// `[-87, 88]`, so the result is always finite and positive.
#[inline]
pub fn exp_f32(x: f32) -> f32 {
    let x = x.clamp(-87.0, 88.0);
    let t = x * LOG2E + ROUND_MAGIC;
    let n = t - ROUND_MAGIC;
    let r = x - n * LN2_HI - n * LN2_LO;
    let p = 1.987_569_2e-4;
    let p = p * r + 1.398_2e-3;
    let p = p * r + 8.333_452e-3;
    let p = p * r + 4.166_579_6e-2;
    let p = p * r + 1.666_666_5e-1;
    let p = p * r + 5.000_000_1e-1;
    let y = p * (r * r) + r + 1.0;
    let k = t.to_bits().wrapping_sub(ROUND_MAGIC.to_bits());
    let scale = f32::from_bits(k.wrapping_add(127) << 23);
    y * scale
}

/// `1 / (1 + e^-x)`
#[inline]
pub fn logistic_f32(x: f32) -> f32 {
    1.0 / (1.0 + exp_f32(-x))
}

/// `ln(1 + u)` for `u` in `[0, 1]`, via the series of `2 atanh(u / (2 + u))`.
#[inline]
pub fn ln_1p_unit_f32(u: f32) -> f32 {
    let s = u / (2.0 + u);
    let s2 = s * s;
    let p = 1.0 / 15.0;
    let p = p * s2 + 1.0 / 13.0;
    let p = p * s2 + 1.0 / 11.0;
    let p = p * s2 + 1.0 / 9.0;
    let p = p * s2 + 1.0 / 7.0;
    let p = p * s2 + 1.0 / 5.0;
    let p = p * s2 + 1.0 / 3.0;
    2.0 * s * (p * s2 + 1.0)
}

/// `ln(1 + e^x)`, never negative.
#[inline]
pub fn softplus_f32(x: f32) -> f32 {
    x.max(0.0) + ln_1p_unit_f32(exp_f32(-x.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn exact_at_zero() {
        assert_eq!(exp_f32(0.0), 1.0);
        assert_eq!(logistic_f32(0.0), 0.5);
    }

    #[test]
    fn dense_sweep_against_f64() {
        let mut worst = 0.0f64;
        for i in -870_000..=880_000 {
            let x = i as f32 * 1e-4;
            let want = (x as f64).exp();
            worst = worst.max(((exp_f32(x) as f64 - want) / want).abs());
        }
        assert!(worst < 3e-7, "{worst}");
    }

    #[test]
    fn saturates_finite() {
        assert!(exp_f32(1e4).is_finite());
        assert!(exp_f32(-1e4) > 0.0);
        assert!(logistic_f32(-1e4) >= 0.0 && logistic_f32(-1e4) < 1e-37);
        assert_eq!(logistic_f32(1e4), 1.0);
    }

    #[test]
    fn ln_1p_on_unit_interval() {
        let mut worst = 0.0f64;
        for i in 0..=100_000 {
            let u = i as f32 * 1e-5;
            let want = (u as f64).ln_1p();
            let got = ln_1p_unit_f32(u) as f64;
            worst = worst.max((got - want).abs() / want.max(1e-30));
        }
        assert!(worst < 3e-7, "{worst}");
        assert_eq!(ln_1p_unit_f32(0.0), 0.0);
    }

    #[test]
    fn softplus_matches_f64() {
        for i in -4000..=4000 {
            let x = i as f32 * 0.01;
            let want = (x as f64).exp().ln_1p();
            let got = softplus_f32(x) as f64;
            assert!(
                (got - want).abs() <= 1e-6 * want.max(1.0),
                "{x}: {got} vs {want}"
            );
            assert!(got >= 0.0);
        }
        assert!(softplus_f32(-1e4) >= 0.0);
    }

    proptest! {
        #[test]
        fn monotone(a in -80.0f32..80.0, d in 1e-3f32..1.0) {
            prop_assert!(exp_f32(a + d) >= exp_f32(a));
        }
    }
}
