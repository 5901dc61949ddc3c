//! Runtime selection of the widest vector unit for hot row loops.
//!
//! The closure is compiled once per instruction set. Multiply and add are
//! never contracted, so every path returns bitwise identical results.

/// Runs `f` with the widest vector extension the CPU supports.
#[inline]
pub fn dispatch<R>(f: impl FnOnce() -> R) -> R {
    #[cfg(target_arch = "x86_64")]
    {
        if std::is_x86_feature_detected!("avx512f")
            && std::is_x86_feature_detected!("avx512vl")
            && std::is_x86_feature_detected!("avx512bw")
            && std::is_x86_feature_detected!("avx512dq")
        {
            // SAFETY: the features were detected at runtime.
            return unsafe { with_avx512(f) };
        }
        if std::is_x86_feature_detected!("avx2") {
            // SAFETY: the feature was detected at runtime.
            return unsafe { with_avx2(f) };
        }
    }
    f()
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx512f,avx512vl,avx512bw,avx512dq")]
unsafe fn with_avx512<R>(f: impl FnOnce() -> R) -> R {
    f()
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn with_avx2<R>(f: impl FnOnce() -> R) -> R {
    f()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_plain_call() {
        let v: Vec<f32> = (0..1000).map(|i| (i as f32 * 0.37).sin()).collect();
        let plain: Vec<f32> = v.iter().map(|x| x * 1.5 + 0.25 * x).collect();
        let wide = dispatch(|| v.iter().map(|x| x * 1.5 + 0.25 * x).collect::<Vec<f32>>());
        assert_eq!(plain, wide);
    }
}
