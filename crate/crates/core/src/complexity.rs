//! Hypothesis-space and sample-complexity bounds.
//!
//! Sizes are exact big integers; `log10` gives the order of magnitude.

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpaceParams {
    /// Metarules.
    pub m: u64,
    /// Predicate symbols.
    pub p: u64,
    /// Max body literals per clause.
    pub j: u32,
    /// Extra higher-order existentials per clause.
    pub k: u32,
    /// Max clauses.
    pub n: u32,
    pub epsilon: f64,
    pub delta: f64,
}

impl SpaceParams {
    pub fn new(m: u64, p: u64, j: u32, n: u32) -> Self {
        SpaceParams {
            m,
            p,
            j,
            k: 0,
            n,
            epsilon: 0.1,
            delta: 0.05,
        }
    }

    pub fn with_k(self, k: u32) -> Self {
        SpaceParams { k, ..self }
    }

    fn check(&self) {
        assert!(self.m >= 1 && self.p >= 1 && self.n >= 1, "m, p, n must be at least 1");
        assert!(
            self.epsilon > 0.0 && self.epsilon < 1.0 && self.delta > 0.0 && self.delta < 1.0,
            "epsilon and delta must lie in (0,1)"
        );
    }

    /// Symbols chosen per clause: head, body, and (abstracted) extra existentials.
    fn slots(&self, abstracted: bool) -> u32 {
        self.j + 1 + if abstracted { self.k } else { 0 }
    }
}

/// `(m p^(j+1))^n`, or `(m p^(j+1+k))^n` when abstracted.
pub fn space_size(params: &SpaceParams, abstracted: bool) -> BigUint {
    params.check();
    let clause = BigUint::from(params.m) * BigUint::from(params.p).pow(params.slots(abstracted));
    clause.pow(params.n)
}

/// Number of examples sufficient for error at most epsilon with confidence 1 - delta.
pub fn sample_bound(params: &SpaceParams, abstracted: bool) -> f64 {
    params.check();
    let n = params.n as f64;
    let lm = (params.m as f64).ln();
    let lp = (params.p as f64).ln();
    (n * lm + params.slots(abstracted) as f64 * n * lp + (1.0 / params.delta).ln()) / params.epsilon
}

/// Whether abstraction shrinks the space: `n_u - n_a > k/(j+1) * n_a`.
pub fn crossover(n_u: u32, n_a: u32, j: u32, k: u32) -> bool {
    // cross-multiplied to stay in integers
    (n_u as i64 - n_a as i64) * (j as i64 + 1) > k as i64 * n_a as i64
}

/// `(m p^3 c^6)^n`, the bottom-up engine's bound for two-literal chained clauses.
pub fn fc_space_bound(m: u64, p: u64, c: u64, n: u32) -> BigUint {
    assert!(m >= 1 && p >= 1 && c >= 1 && n >= 1);
    (BigUint::from(m) * BigUint::from(p).pow(3) * BigUint::from(c).pow(6)).pow(n)
}

/// Base-10 logarithm of a big integer, accurate to double precision.
pub fn log10(x: &BigUint) -> f64 {
    if x.bits() == 0 {
        return f64::NEG_INFINITY;
    }
    let shift = x.bits().saturating_sub(60);
    let top = (x >> shift).to_f64().unwrap_or(f64::MAX);
    top.log10() + shift as f64 * std::f64::consts::LOG10_2
}

/// `1` as a big integer, for callers comparing against the degenerate space.
pub fn one() -> BigUint {
    BigUint::one()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn worked_examples() {
        let u = space_size(&SpaceParams::new(4, 6, 2, 7), false);
        assert_eq!(u, BigUint::from(864u32).pow(7));
        assert!((log10(&u) - 20.555).abs() < 0.01);
        let a = space_size(&SpaceParams::new(5, 7, 2, 3).with_k(1), true);
        assert_eq!(a, BigUint::from(12005u32).pow(3));
        assert!((log10(&a) - 12.238).abs() < 0.01);
        assert_eq!(space_size(&SpaceParams::new(1, 1, 0, 1), false), one());
    }

    #[test]
    fn sample_bounds() {
        let p = SpaceParams::new(10, 10, 2, 5);
        let expected = 10.0 * (5.0 * 10f64.ln() + 15.0 * 10f64.ln() + 20f64.ln());
        assert!((sample_bound(&p, false) - expected).abs() < 1e-9);
        assert!((sample_bound(&p, false) - 490.5).abs() < 0.1);
        let trivial = SpaceParams::new(1, 1, 2, 5);
        assert!((sample_bound(&trivial, false) - 10.0 * 20f64.ln()).abs() < 1e-12);
        assert_eq!(sample_bound(&p, true), sample_bound(&p, false));
    }

    #[test]
    fn crossover_cases() {
        assert!(crossover(7, 3, 2, 1));
        assert!(!crossover(5, 5, 2, 1));
        assert!(!crossover(4, 3, 2, 3));
    }

    #[test]
    fn fc_bound() {
        assert_eq!(fc_space_bound(1, 1, 1, 1), one());
        assert_eq!(fc_space_bound(2, 3, 2, 1), BigUint::from(3456u32));
    }

    /// Distinct programs of exactly `n` distinct clauses, counted by walking
    /// every metarule grounding.
    fn enumerate(m: u64, p: u64, slots: u32, n: u32) -> u64 {
        let mut clauses: Vec<Vec<u64>> = Vec::new();
        for mr in 0..m {
            let total = p.pow(slots);
            for code in 0..total {
                let mut syms = vec![mr];
                let mut c = code;
                for _ in 0..slots {
                    syms.push(c % p);
                    c /= p;
                }
                clauses.push(syms);
            }
        }
        fn choose(from: &[Vec<u64>], n: u32) -> u64 {
            if n == 0 {
                return 1;
            }
            (0..from.len()).map(|i| choose(&from[i + 1..], n - 1)).sum()
        }
        choose(&clauses, n)
    }

    #[test]
    fn brute_force_is_below_the_bound() {
        for m in 1..=2 {
            for p in 1..=2 {
                for j in 0..=2 {
                    for k in 0..=1 {
                        for n in 1..=2 {
                            let params = SpaceParams::new(m, p, j, n).with_k(k);
                            for abstracted in [false, true] {
                                let count = enumerate(m, p, params.slots(abstracted), n);
                                assert!(BigUint::from(count) <= space_size(&params, abstracted));
                            }
                        }
                    }
                }
            }
        }
    }

    proptest! {
        #[test]
        fn monotone(m in 1u64..20, p in 1u64..20, j in 0u32..4, k in 0u32..3, n in 1u32..8) {
            let base = SpaceParams::new(m, p, j, n).with_k(k);
            let s = space_size(&base, true);
            let bigger_m = space_size(&SpaceParams { m: m + 1, ..base }, true);
            let bigger_p = space_size(&SpaceParams { p: p + 1, ..base }, true);
            let bigger_n = space_size(&SpaceParams { n: n + 1, ..base }, true);
            let bigger_k = space_size(&SpaceParams { k: k + 1, ..base }, true);
            prop_assert!(bigger_m > s);
            prop_assert!(bigger_p > s);
            prop_assert!(bigger_n > s || s == one());
            prop_assert!(bigger_k > s || p == 1);
        }

        #[test]
        fn fc_ratio(m in 1u64..6, p in 1u64..6, c in 1u64..6, n in 1u32..4) {
            let s = space_size(&SpaceParams::new(m, p, 2, n), false);
            prop_assert_eq!(fc_space_bound(m, p, c, n), s * BigUint::from(c).pow(6 * n));
        }

        #[test]
        fn sample_bound_agrees_with_crossover(p in 2u64..50, j in 0u32..4, k in 1u32..4, n_a in 1u32..10, d in 1u32..10) {
            // with a single metarule the ln m term vanishes and the comparison is exact
            let n_u = n_a + d;
            let su = sample_bound(&SpaceParams::new(1, p, j, n_u).with_k(k), false);
            let sa = sample_bound(&SpaceParams::new(1, p, j, n_a).with_k(k), true);
            let lhs = (n_u - n_a) as i64 * (j as i64 + 1);
            let rhs = k as i64 * n_a as i64;
            if lhs != rhs {
                prop_assert_eq!(sa < su, crossover(n_u, n_a, j, k));
            }
        }
    }
}
