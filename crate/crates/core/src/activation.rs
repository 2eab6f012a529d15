//! Smooth approximations of the ReLU activation.
//!
//! The shipped family is `R_r(x) = r⁻¹ ln(1 + r⁻¹ e^{rx})` for integer `r >= 1`.
//! It is evaluated through the rearrangement `R_r(x) = r⁻¹ softplus(r x − ln r)`
//! and `R_r'(x) = logistic(r x − ln r)`, which never overflow.
//!
//! For `x > 0` the value gap `|R_r(x) − x|` behaves like `ln(r) / r`, and at small
//! `r` it first grows before it decays (with a maximum near `r = e`). Only the
//! tail of the sequence is monotone.

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::registry::Registry;

/// Name under which [`LogSoftplus`] is registered.
pub const DEFAULT_FAMILY: &str = "log-softplus";

/// Approximation index `r >= 1` of a smooth ReLU family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u64", into = "u64")]
pub struct SmoothIndex(u64);

impl SmoothIndex {
    pub fn new(r: u64) -> Result<Self> {
        if r == 0 {
            Err(LabError::InvalidSmoothIndex)
        } else {
            Ok(Self(r))
        }
    }

    /// `2^k`, for `k <= 63`.
    pub fn pow2(k: u32) -> Self {
        Self(1u64 << k)
    }

    pub fn get(self) -> u64 {
        self.0
    }

    pub fn as_f64(self) -> f64 {
        self.0 as f64
    }
}

impl TryFrom<u64> for SmoothIndex {
    type Error = LabError;

    fn try_from(r: u64) -> Result<Self> {
        Self::new(r)
    }
}

impl From<SmoothIndex> for u64 {
    fn from(r: SmoothIndex) -> u64 {
        r.0
    }
}

/// `ln(1 + e^u)` without overflow.
pub fn softplus(u: f64) -> f64 {
    u.max(0.0) + (-u.abs()).exp().ln_1p()
}

/// `1 / (1 + e^{-u})` without overflow.
pub fn logistic(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

pub fn relu(x: f64) -> f64 {
    x.max(0.0)
}

/// Indicator of `(0, ∞)`: the derivative convention at the kink is 0.
pub fn relu_step(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        0.0
    }
}

/// A C¹ family `R_r` converging to ReLU (values) and to the indicator of
/// `(0, ∞)` (derivatives) pointwise as `r → ∞`.
pub trait SmoothFamily: Send + Sync {
    fn name(&self) -> &str;
    fn value(&self, r: SmoothIndex, x: f64) -> f64;
    fn derivative(&self, r: SmoothIndex, x: f64) -> f64;
}

/// `R_r(x) = r⁻¹ ln(1 + r⁻¹ e^{rx})`.
#[derive(Debug, Clone, Copy, Default)]
pub struct LogSoftplus;

impl SmoothFamily for LogSoftplus {
    fn name(&self) -> &str {
        DEFAULT_FAMILY
    }

    fn value(&self, r: SmoothIndex, x: f64) -> f64 {
        value(r, x)
    }

    fn derivative(&self, r: SmoothIndex, x: f64) -> f64 {
        derivative(r, x)
    }
}

/// `R_r(x)` of the shipped family.
pub fn value(r: SmoothIndex, x: f64) -> f64 {
    let rf = r.as_f64();
    softplus(rf * x - rf.ln()) / rf
}

/// `R_r'(x) = e^{rx} / (r + e^{rx})` of the shipped family.
pub fn derivative(r: SmoothIndex, x: f64) -> f64 {
    let rf = r.as_f64();
    logistic(rf * x - rf.ln())
}

/// The two pointwise gaps to the limit at one approximation index.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitGap {
    pub r: SmoothIndex,
    pub value_gap: f64,
    pub derivative_gap: f64,
}

/// `(|R_r(x) − max{x,0}|, |R_r'(x) − 1_{(0,∞)}(x)|)` for each `r` in `rs`.
pub fn limit_profile(x: f64, rs: &[SmoothIndex]) -> Result<Vec<LimitGap>> {
    limit_profile_with(&LogSoftplus, x, rs)
}

pub fn limit_profile_with(
    family: &dyn SmoothFamily,
    x: f64,
    rs: &[SmoothIndex],
) -> Result<Vec<LimitGap>> {
    if rs.windows(2).any(|w| w[0] >= w[1]) {
        return Err(LabError::InvalidConfig(
            "smoothing indices must be strictly increasing".into(),
        ));
    }
    Ok(rs
        .iter()
        .map(|&r| LimitGap {
            r,
            value_gap: (family.value(r, x) - relu(x)).abs(),
            derivative_gap: (family.derivative(r, x) - relu_step(x)).abs(),
        })
        .collect())
}

/// Registry holding every shipped family.
pub fn family_registry() -> Registry<dyn SmoothFamily> {
    let mut reg: Registry<dyn SmoothFamily> = Registry::new("smooth activation family");
    reg.register(DEFAULT_FAMILY, Box::new(LogSoftplus));
    reg
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn r(n: u64) -> SmoothIndex {
        SmoothIndex::new(n).unwrap()
    }

    #[test]
    fn zero_index_rejected() {
        assert_eq!(SmoothIndex::new(0), Err(LabError::InvalidSmoothIndex));
    }

    #[test]
    fn value_examples() {
        assert_abs_diff_eq!(value(r(1), 0.0), std::f64::consts::LN_2, epsilon = 1e-15);
        assert!((value(r(1000), 3.0) - 3.0).abs() < 1e-2);
        assert!(value(r(1000), -3.0).abs() < 1e-2);
    }

    #[test]
    fn value_matches_literal_formula_where_it_is_safe() {
        for &(n, x) in &[(1u64, 0.3), (3, -1.2), (10, 2.0), (50, 5.0), (7, 0.0)] {
            let rf = n as f64;
            let literal = (1.0 + (rf * x).exp() / rf).ln() / rf;
            assert_abs_diff_eq!(value(r(n), x), literal, epsilon = 1e-13);
        }
    }

    #[test]
    fn no_overflow_at_extremes() {
        for &x in &[1e8, -1e8, 709.0, 800.0] {
            let v = value(r(1_000_000), x);
            let d = derivative(r(1_000_000), x);
            assert!(v.is_finite() && d.is_finite());
        }
        assert_abs_diff_eq!(value(r(1), 1e8), 1e8, epsilon = 1e-6);
    }

    #[test]
    fn derivative_examples() {
        assert_abs_diff_eq!(derivative(r(1), 0.0), 0.5, epsilon = 1e-15);
        for n in [1u64, 2, 9, 1000, 1 << 20] {
            assert_abs_diff_eq!(derivative(r(n), 0.0), 1.0 / (n as f64 + 1.0), epsilon = 1e-15);
        }
        assert!((derivative(r(200), 1.0) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn limit_profile_examples() {
        let p = limit_profile(1.0, &[r(1), r(10), r(100)]).unwrap();
        assert!(p[0].value_gap > p[1].value_gap && p[1].value_gap > p[2].value_gap);
        assert!(p[0].derivative_gap > p[1].derivative_gap && p[1].derivative_gap > p[2].derivative_gap);

        let p0 = limit_profile(0.0, &[r(1), r(4), r(100)]).unwrap();
        for g in &p0 {
            assert_abs_diff_eq!(g.derivative_gap, 1.0 / (g.r.as_f64() + 1.0), epsilon = 1e-15);
        }

        let pn = limit_profile(-5.0, &[r(1), r(10)]).unwrap();
        assert!(pn[1].value_gap < pn[0].value_gap);

        assert!(limit_profile(1.0, &[r(2), r(2)]).is_err());
        assert!(limit_profile(1.0, &[r(4), r(2)]).is_err());
    }

    #[test]
    fn value_gap_is_not_monotone_from_r_one() {
        // At x = 1 the gap rises from r = 2 to r = 4 before decaying.
        let p = limit_profile(1.0, &[r(1), r(2), r(4), r(8)]).unwrap();
        assert!(p[2].value_gap > p[1].value_gap);
        assert!(p[3].value_gap < p[2].value_gap);
    }

    #[test]
    fn registry_ships_default_family() {
        let reg = family_registry();
        let fam = reg.get(DEFAULT_FAMILY).unwrap();
        assert_eq!(fam.name(), DEFAULT_FAMILY);
        assert_eq!(fam.value(r(3), 0.2), value(r(3), 0.2));
    }

    proptest! {
        #[test]
        fn derivative_bounded_by_one(n in 1u64..100_000, x in -1e3f64..1e3) {
            let d = derivative(r(n), x);
            prop_assert!((0.0..=1.0).contains(&d));
            // Strictly inside (0,1) wherever the logistic does not saturate in f64.
            let u = n as f64 * x - (n as f64).ln();
            if u.abs() < 30.0 {
                prop_assert!(d > 0.0 && d < 1.0);
            }
        }

        #[test]
        fn derivative_matches_central_difference(n in 1u64..=100, x in -10f64..10.0) {
            let h = 1e-6;
            let fd = (value(r(n), x + h) - value(r(n), x - h)) / (2.0 * h);
            prop_assert!((fd - derivative(r(n), x)).abs() < 1e-5);
        }

        #[test]
        fn gaps_decrease_along_doubling_in_the_tail(x in prop_oneof![-20f64..-1e-3, 1e-3f64..20.0]) {
            // Every step r -> 2r with r >= max(4, 4/|x|) shrinks both gaps.
            let start = (4.0f64).max(4.0 / x.abs());
            let k0 = start.log2().ceil() as u32;
            let rs: Vec<_> = (k0..k0 + 30).map(SmoothIndex::pow2).collect();
            let p = limit_profile(x, &rs).unwrap();
            for w in p.windows(2) {
                prop_assert!(w[1].value_gap <= w[0].value_gap);
                prop_assert!(w[1].derivative_gap <= w[0].derivative_gap);
            }
            prop_assert!(p.last().unwrap().value_gap < 1e-6);
        }

        #[test]
        fn negative_side_gaps_monotone_from_r_one(x in -20f64..-1e-3) {
            let rs: Vec<_> = (0..30).map(SmoothIndex::pow2).collect();
            let p = limit_profile(x, &rs).unwrap();
            for w in p.windows(2) {
                prop_assert!(w[1].value_gap <= w[0].value_gap);
                prop_assert!(w[1].derivative_gap <= w[0].derivative_gap);
            }
        }
    }
}
