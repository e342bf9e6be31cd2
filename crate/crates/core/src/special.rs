//! Special functions: log-gamma, log-binomial coefficients and the Riemann zeta function.

use crate::scalar::Real;

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

/// Natural log of |Γ(x)| via the Lanczos approximation (g = 7, n = 9).
pub fn ln_gamma<T: Real>(x: T) -> T {
    let half = T::lit(0.5);
    if x < half {
        // reflection: Γ(x)Γ(1-x) = π / sin(πx)
        let pi = T::PI();
        return (pi / (pi * x).sin().abs()).ln() - ln_gamma(T::one() - x);
    }
    let x = x - T::one();
    let mut acc = T::lit(LANCZOS[0]);
    for (i, &c) in LANCZOS.iter().enumerate().skip(1) {
        acc = acc + T::lit(c) / (x + T::of_usize(i));
    }
    let t = x + T::lit(LANCZOS_G) + half;
    half * (T::lit(2.0) * T::PI()).ln() + (x + half) * t.ln() - t + acc.ln()
}

/// `ln k!`, exact summation for small k.
pub fn ln_factorial<T: Real>(k: u64) -> T {
    if k < 2 {
        return T::zero();
    }
    if k <= 64 {
        let mut s = 0.0f64;
        for i in 2..=k {
            s += (i as f64).ln();
        }
        return T::lit(s);
    }
    ln_gamma(T::lit(k as f64 + 1.0))
}

/// `ln C(n, k)`; `-inf` when `k > n`.
pub fn ln_choose<T: Real>(n: u64, k: u64) -> T {
    if k > n {
        return T::neg_infinity();
    }
    if k == 0 || k == n {
        return T::zero();
    }
    ln_factorial::<T>(n) - ln_factorial::<T>(k) - ln_factorial::<T>(n - k)
}

/// `C(n, k)` as a real number.
pub fn choose<T: Real>(n: u64, k: u64) -> T {
    ln_choose::<T>(n, k).exp()
}

/// `ln C(r - 1, r - k)` with the window-density convention `C(-1, 0) = 1`.
pub(crate) fn ln_choose_shifted<T: Real>(r: u64, k: u64) -> T {
    if k > r {
        return T::neg_infinity();
    }
    if r == 0 {
        // k == 0 here
        return T::zero();
    }
    if k == 0 {
        return T::neg_infinity();
    }
    ln_choose::<T>(r - 1, r - k)
}

const BERNOULLI_OVER_FACT: [f64; 6] = [
    1.0 / 12.0,            // B2 / 2!
    -1.0 / 720.0,          // B4 / 4!
    1.0 / 30_240.0,        // B6 / 6!
    -1.0 / 1_209_600.0,    // B8 / 8!
    1.0 / 47_900_160.0,    // B10 / 10!
    -691.0 / 1_307_674_368_000.0, // B12 / 12!
];

/// Riemann zeta ζ(s) for real s > 1 (Euler–Maclaurin, N = 10 direct terms).
pub fn zeta<T: Real>(s: T) -> T {
    debug_assert!(s > T::one());
    let n_direct = 10usize;
    let mut sum = T::zero();
    for n in 1..n_direct {
        sum = sum + T::of_usize(n).powf(-s);
    }
    let n = T::of_usize(n_direct);
    let n_pow = n.powf(-s);
    sum = sum + n * n_pow / (s - T::one()) + T::lit(0.5) * n_pow;
    // Σ B_2k/(2k)! · s(s+1)…(s+2k-2) · N^{-s-2k+1}
    let mut rising = s;
    let mut npow = n_pow / n;
    for (j, &c) in BERNOULLI_OVER_FACT.iter().enumerate() {
        if j > 0 {
            let a = s + T::of_usize(2 * j - 1);
            let b = s + T::of_usize(2 * j);
            rising = rising * a * b;
            npow = npow / (n * n);
        }
        sum = sum + T::lit(c) * rising * npow;
    }
    sum
}

/// Upper bound on the tail Σ_{k > cutoff} k^{-s}.
pub fn zeta_tail_bound<T: Real>(s: T, cutoff: u64) -> T {
    T::lit(cutoff as f64).powf(T::one() - s) / (s - T::one())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn zeta_known_values() {
        let pi = std::f64::consts::PI;
        assert_relative_eq!(zeta(2.0f64), pi * pi / 6.0, max_relative = 1e-14);
        assert_relative_eq!(zeta(4.0f64), pi.powi(4) / 90.0, max_relative = 1e-14);
        assert_relative_eq!(zeta(3.0f64), 1.202_056_903_159_594_2, max_relative = 1e-14);
        assert_relative_eq!(zeta(1.0001f64), 10_000.577_222_946_1, max_relative = 1e-9);
        assert_relative_eq!(zeta(50.0f64), 1.0 + 2f64.powi(-50), max_relative = 1e-15);
    }

    #[test]
    fn zeta_matches_direct_sum() {
        for &s in &[1.5f64, 2.5, 4.1, 7.0] {
            let mut direct = 0.0;
            let cutoff = 2_000_000u64;
            for k in 1..=cutoff {
                direct += (k as f64).powf(-s);
            }
            // tail via integral midpoint estimate
            direct += (cutoff as f64 + 0.5).powf(1.0 - s) / (s - 1.0);
            assert_relative_eq!(zeta(s), direct, max_relative = 1e-9);
        }
    }

    #[test]
    fn ln_gamma_integers_and_half() {
        for k in 1u64..30 {
            let exact: f64 = (1..k).map(|i| (i as f64).ln()).sum();
            assert_relative_eq!(ln_gamma(k as f64), exact, epsilon = 1e-12, max_relative = 1e-13);
        }
        assert_relative_eq!(ln_gamma(0.5f64), std::f64::consts::PI.sqrt().ln(), epsilon = 1e-14);
        assert_relative_eq!(ln_gamma(1e-3f64), 6.907_178_885_383_853, epsilon = 1e-11);
    }

    #[test]
    fn choose_small() {
        assert_relative_eq!(choose::<f64>(5, 2), 10.0, epsilon = 1e-12);
        assert_relative_eq!(choose::<f64>(60, 30), 1.182_645_815_648_614_2e17, max_relative = 1e-12);
        assert_eq!(ln_choose::<f64>(3, 4), f64::NEG_INFINITY);
        assert_eq!(ln_choose_shifted::<f64>(0, 0), 0.0);
        assert_eq!(ln_choose_shifted::<f64>(3, 0), f64::NEG_INFINITY);
    }

    #[test]
    fn f32_path() {
        assert!((zeta(2.0f32) - 1.644_934).abs() < 1e-5);
        assert!((ln_gamma(5.0f32) - 24f32.ln()).abs() < 1e-5);
    }
}
