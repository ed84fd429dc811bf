//! Normal distribution function and quantile, and the symmetric binomial
//! tail used by the unconditional median interval.

use core::f64::consts::{LN_2, PI, SQRT_2};

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / SQRT_2)
}

/// Standard normal quantile. Acklam's rational approximation followed by a
/// single Halley step against `erfc`; absolute error is below `1e-12` on
/// `(1e-300, 1 - 1e-16)`.
pub fn normal_quantile(p: f64) -> f64 {
    if p.is_nan() || !(0.0..=1.0).contains(&p) {
        return f64::NAN;
    }
    if p == 0.0 {
        return f64::NEG_INFINITY;
    }
    if p == 1.0 {
        return f64::INFINITY;
    }

    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    const P_LOW: f64 = 0.02425;

    let tail = |q: f64| {
        let t = libm::sqrt(-2.0 * libm::log(q));
        (((((C[0] * t + C[1]) * t + C[2]) * t + C[3]) * t + C[4]) * t + C[5])
            / ((((D[0] * t + D[1]) * t + D[2]) * t + D[3]) * t + 1.0)
    };
    let mut x = if p < P_LOW {
        tail(p)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        -tail(1.0 - p)
    };

    // Halley refinement
    let e = normal_cdf(x) - p;
    let u = e * libm::sqrt(2.0 * PI) * libm::exp(x * x / 2.0);
    if u.is_finite() {
        x -= u / (1.0 + x * u / 2.0);
    }
    x
}

/// `P{X < k}` for `X ~ Binomial(n, 1/2)`, summed term by term in log space.
pub fn binomial_half_cdf_below(n: u64, k: u64) -> f64 {
    if k == 0 {
        return 0.0;
    }
    if k > n {
        return 1.0;
    }
    let mut log_term = -(n as f64) * LN_2;
    let mut total = 0.0;
    for j in 0..k {
        total += libm::exp(log_term);
        log_term += libm::log((n - j) as f64) - libm::log((j + 1) as f64);
    }
    total.min(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normal_cdf_known_values() {
        assert!((normal_cdf(0.0) - 0.5).abs() < 1e-15);
        assert!((normal_cdf(1.959_963_984_540_054) - 0.975).abs() < 1e-12);
        assert!((normal_cdf(-1.0) - 0.158_655_253_931_457_05).abs() < 1e-12);
    }

    #[test]
    fn normal_quantile_round_trips() {
        for i in 1..1000 {
            let p = i as f64 / 1000.0;
            let x = normal_quantile(p);
            assert!((normal_cdf(x) - p).abs() < 1e-12, "p = {p}");
        }
        for p in [1e-10, 1e-5, 1.0 - 1e-10] {
            let x = normal_quantile(p);
            assert!(((normal_cdf(x) - p) / p).abs() < 1e-9, "p = {p}");
        }
        assert!((normal_quantile(0.975) - 1.959_963_984_540_054).abs() < 1e-12);
        assert_eq!(normal_quantile(0.5), 0.0);
        assert_eq!(normal_quantile(0.0), f64::NEG_INFINITY);
        assert!(normal_quantile(1.5).is_nan());
    }

    fn exact_binomial_below(n: u64, k: u64) -> f64 {
        // Pascal's triangle in u128, exact for n < 128
        let mut row = alloc::vec![1u128];
        for _ in 0..n {
            let mut next = alloc::vec![1u128; row.len() + 1];
            for j in 1..row.len() {
                next[j] = row[j - 1] + row[j];
            }
            row = next;
        }
        let below: u128 = row.iter().take(k as usize).sum();
        below as f64 / libm::pow(2.0, n as f64)
    }

    #[test]
    fn binomial_matches_pascal_oracle() {
        for n in 1..=120u64 {
            for k in 0..=n + 1 {
                let got = binomial_half_cdf_below(n, k);
                let want = exact_binomial_below(n, k.min(n + 1));
                assert!((got - want).abs() < 1e-12, "n={n} k={k}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn binomial_hundred_boundary() {
        // P{X <= 39} ≈ 0.0176 and P{X <= 40} ≈ 0.0284 for Binom(100, 1/2)
        let p39 = binomial_half_cdf_below(100, 40);
        let p40 = binomial_half_cdf_below(100, 41);
        assert!((p39 - 0.017_600_100_108_852).abs() < 1e-9, "{p39}");
        assert!(p39 <= 0.025 && p40 > 0.025, "{p40}");
    }
}
