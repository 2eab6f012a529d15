//! Parameter layout and forward evaluation of the shallow network
//! `x ↦ c + Σᵢ vᵢ R(bᵢ + Σⱼ wᵢⱼ xⱼ)`.
//!
//! The flat parameter vector has `dd = d·H + 2H + 1` entries. With 1-based
//! positions `φ₁..φ_dd` the layout is
//!
//! | block | positions                         | 0-based storage index |
//! |-------|-----------------------------------|-----------------------|
//! | wᵢⱼ   | `(i−1)d + j`                      | `i·d + j`             |
//! | bᵢ    | `Hd + i`                          | `H·d + i`             |
//! | vᵢ    | `H(d+1) + i`                      | `H·(d+1) + i`         |
//! | c     | `dd`                              | `dd − 1`              |
//!
//! All indices taken by this module's API are 0-based.

use serde::{Deserialize, Serialize};

use crate::activation::{self, SmoothFamily, SmoothIndex};
use crate::error::{LabError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "ShapeRepr", into = "ShapeRepr")]
pub struct NetworkShape {
    input_dim: usize,
    hidden: usize,
}

#[derive(Serialize, Deserialize)]
struct ShapeRepr {
    d: usize,
    hidden: usize,
}

impl TryFrom<ShapeRepr> for NetworkShape {
    type Error = LabError;
    fn try_from(r: ShapeRepr) -> Result<Self> {
        NetworkShape::new(r.d, r.hidden)
    }
}

impl From<NetworkShape> for ShapeRepr {
    fn from(s: NetworkShape) -> Self {
        ShapeRepr {
            d: s.input_dim,
            hidden: s.hidden,
        }
    }
}

impl NetworkShape {
    pub fn new(input_dim: usize, hidden: usize) -> Result<Self> {
        if input_dim == 0 || hidden == 0 {
            return Err(LabError::InvalidShape(format!(
                "d and H must be positive (got d={input_dim}, H={hidden})"
            )));
        }
        Ok(Self { input_dim, hidden })
    }

    /// Validates an externally supplied parameter count against `d·H + 2H + 1`.
    pub fn with_param_count(input_dim: usize, hidden: usize, dd: usize) -> Result<Self> {
        let shape = Self::new(input_dim, hidden)?;
        if shape.param_count() != dd {
            return Err(LabError::InvalidShape(format!(
                "dd={dd} but d*H + 2H + 1 = {}",
                shape.param_count()
            )));
        }
        Ok(shape)
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn param_count(&self) -> usize {
        self.input_dim * self.hidden + 2 * self.hidden + 1
    }

    pub fn weight_index(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.hidden && j < self.input_dim);
        i * self.input_dim + j
    }

    pub fn bias_index(&self, i: usize) -> usize {
        self.hidden * self.input_dim + i
    }

    pub fn outer_index(&self, i: usize) -> usize {
        self.hidden * (self.input_dim + 1) + i
    }

    pub fn offset_index(&self) -> usize {
        self.param_count() - 1
    }
}

/// Read-only view of a flat vector through the w/b/v/c layout.
#[derive(Debug, Clone, Copy)]
pub struct LayoutView<'a> {
    shape: NetworkShape,
    values: &'a [f64],
}

impl<'a> LayoutView<'a> {
    pub fn new(shape: NetworkShape, values: &'a [f64]) -> Result<Self> {
        if values.len() != shape.param_count() {
            return Err(LabError::ShapeMismatch {
                expected: shape.param_count(),
                got: values.len(),
            });
        }
        Ok(Self { shape, values })
    }

    pub fn shape(&self) -> NetworkShape {
        self.shape
    }

    /// Whole weight block, row-major `H × d`.
    pub fn weights(&self) -> &'a [f64] {
        &self.values[..self.shape.hidden * self.shape.input_dim]
    }

    pub fn weight_row(&self, i: usize) -> &'a [f64] {
        let d = self.shape.input_dim;
        &self.values[i * d..(i + 1) * d]
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.values[self.shape.weight_index(i, j)]
    }

    pub fn biases(&self) -> &'a [f64] {
        let s = self.shape.bias_index(0);
        &self.values[s..s + self.shape.hidden]
    }

    pub fn outer(&self) -> &'a [f64] {
        let s = self.shape.outer_index(0);
        &self.values[s..s + self.shape.hidden]
    }

    pub fn offset(&self) -> f64 {
        self.values[self.shape.offset_index()]
    }

    /// Re-flattens the four blocks in storage order.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.values.len());
        for i in 0..self.shape.hidden {
            out.extend_from_slice(self.weight_row(i));
        }
        out.extend_from_slice(self.biases());
        out.extend_from_slice(self.outer());
        out.push(self.offset());
        out
    }
}

/// The parameter φ ∈ ℝ^dd, all entries finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ParamRepr", into = "ParamRepr")]
pub struct ParamVector {
    shape: NetworkShape,
    values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ParamRepr {
    shape: NetworkShape,
    values: Vec<f64>,
}

impl TryFrom<ParamRepr> for ParamVector {
    type Error = LabError;
    fn try_from(r: ParamRepr) -> Result<Self> {
        ParamVector::new(r.shape, r.values)
    }
}

impl From<ParamVector> for ParamRepr {
    fn from(p: ParamVector) -> Self {
        ParamRepr {
            shape: p.shape,
            values: p.values,
        }
    }
}

impl ParamVector {
    pub fn new(shape: NetworkShape, values: Vec<f64>) -> Result<Self> {
        if values.len() != shape.param_count() {
            return Err(LabError::ShapeMismatch {
                expected: shape.param_count(),
                got: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(LabError::NonFinite(i));
        }
        Ok(Self { shape, values })
    }

    pub fn zeros(shape: NetworkShape) -> Self {
        Self {
            shape,
            values: vec![0.0; shape.param_count()],
        }
    }

    /// Builds φ from its blocks; `weights` is row-major `H × d`.
    pub fn from_parts(
        shape: NetworkShape,
        weights: &[f64],
        biases: &[f64],
        outer: &[f64],
        offset: f64,
    ) -> Result<Self> {
        let h = shape.hidden();
        if weights.len() != h * shape.input_dim() || biases.len() != h || outer.len() != h {
            return Err(LabError::ShapeMismatch {
                expected: shape.param_count(),
                got: weights.len() + biases.len() + outer.len() + 1,
            });
        }
        let mut values = Vec::with_capacity(shape.param_count());
        values.extend_from_slice(weights);
        values.extend_from_slice(biases);
        values.extend_from_slice(outer);
        values.push(offset);
        Self::new(shape, values)
    }

    pub fn shape(&self) -> NetworkShape {
        self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn view(&self) -> LayoutView<'_> {
        LayoutView {
            shape: self.shape,
            values: &self.values,
        }
    }

    pub fn offset(&self) -> f64 {
        self.values[self.shape.offset_index()]
    }

    pub fn norm_sq(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// `self − step · direction`; fails if the result is not finite.
    pub fn stepped(&self, step: f64, direction: &[f64]) -> Result<Self> {
        if direction.len() != self.values.len() {
            return Err(LabError::ShapeMismatch {
                expected: self.values.len(),
                got: direction.len(),
            });
        }
        let values = self
            .values
            .iter()
            .zip(direction)
            .map(|(p, g)| p - step * g)
            .collect();
        Self::new(self.shape, values)
    }
}

/// Unpacks φ into its (W, b, v, c) views.
pub fn unpack(phi: &ParamVector) -> LayoutView<'_> {
    phi.view()
}

/// An input point `x ∈ ℝ^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct InputPoint(Vec<f64>);

impl InputPoint {
    pub fn new(coords: Vec<f64>) -> Self {
        Self(coords)
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

impl From<Vec<f64>> for InputPoint {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

impl AsRef<[f64]> for InputPoint {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

pub(crate) fn check_input(shape: NetworkShape, x: &[f64]) -> Result<()> {
    if x.len() != shape.input_dim() {
        return Err(LabError::InputDimension {
            expected: shape.input_dim(),
            got: x.len(),
        });
    }
    Ok(())
}

/// `bᵢ + Σⱼ wᵢⱼ xⱼ` with no dimension check.
#[inline]
pub(crate) fn pre_activation_unchecked(view: &LayoutView<'_>, i: usize, x: &[f64]) -> f64 {
    let row = view.weight_row(i);
    view.biases()[i] + row.iter().zip(x).map(|(w, xj)| w * xj).sum::<f64>()
}

pub fn pre_activation(phi: &ParamVector, i: usize, x: &[f64]) -> Result<f64> {
    check_input(phi.shape(), x)?;
    if i >= phi.shape().hidden() {
        return Err(LabError::HiddenIndex {
            index: i,
            hidden: phi.shape().hidden(),
        });
    }
    Ok(pre_activation_unchecked(&phi.view(), i, x))
}

/// All `H` pre-activations at `x`.
pub fn pre_activations(phi: &ParamVector, x: &[f64]) -> Result<Vec<f64>> {
    check_input(phi.shape(), x)?;
    let view = phi.view();
    Ok((0..phi.shape().hidden())
        .map(|i| pre_activation_unchecked(&view, i, x))
        .collect())
}

fn realize_by(phi: &ParamVector, x: &[f64], act: impl Fn(f64) -> f64) -> Result<f64> {
    check_input(phi.shape(), x)?;
    let view = phi.view();
    let hidden: f64 = view
        .outer()
        .iter()
        .enumerate()
        .map(|(i, v)| v * act(pre_activation_unchecked(&view, i, x)))
        .sum();
    Ok(view.offset() + hidden)
}

/// Network output with the exact ReLU.
pub fn realize_exact(phi: &ParamVector, x: &[f64]) -> Result<f64> {
    realize_by(phi, x, activation::relu)
}

/// Network output with the shipped smooth family at index `r`.
pub fn realize_smoothed(phi: &ParamVector, x: &[f64], r: SmoothIndex) -> Result<f64> {
    realize_by(phi, x, |z| activation::value(r, z))
}

pub fn realize_with(
    phi: &ParamVector,
    x: &[f64],
    family: &dyn SmoothFamily,
    r: SmoothIndex,
) -> Result<f64> {
    realize_by(phi, x, |z| family.value(r, z))
}

/// Whether `x` lies in the active region of hidden unit `i` (0-based):
/// strictly positive pre-activation. A pre-activation of exactly 0 is inactive.
pub fn active_indicator(phi: &ParamVector, i: usize, x: &[f64]) -> Result<bool> {
    Ok(pre_activation(phi, i, x)? > 0.0)
}


#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::collection::vec;
    use proptest::prelude::*;

    #[test]
    fn shape_param_count() {
        let s = NetworkShape::new(3, 5).unwrap();
        assert_eq!(s.param_count(), 3 * 5 + 2 * 5 + 1);
        assert!(NetworkShape::new(0, 2).is_err());
        assert!(NetworkShape::new(2, 0).is_err());
        assert!(NetworkShape::with_param_count(1, 3, 10).is_ok());
        assert!(NetworkShape::with_param_count(1, 3, 11).is_err());
    }

    #[test]
    fn param_vector_rejects_bad_input() {
        let s = NetworkShape::new(1, 1).unwrap();
        assert_eq!(
            ParamVector::new(s, vec![0.0; 3]),
            Err(LabError::ShapeMismatch { expected: 4, got: 3 })
        );
        assert_eq!(
            ParamVector::new(s, vec![0.0, f64::NAN, 0.0, 0.0]),
            Err(LabError::NonFinite(1))
        );
        assert!(ParamVector::new(s, vec![0.0, f64::INFINITY, 0.0, 0.0]).is_err());
    }

    #[test]
    fn unpack_listing() {
        let phi = listing_params();
        let v = unpack(&phi);
        assert_eq!(v.weights(), &[-1.0, 1.0, 2.0]);
        assert_eq!(v.weight(2, 0), 2.0);
        assert_eq!(v.biases(), &[2.0, -2.0, 0.0]);
        assert_eq!(v.outer(), &[1.0, -1.0, 2.0]);
        assert_eq!(v.offset(), 3.0);
    }

    #[test]
    fn unpack_small_cases() {
        let s = NetworkShape::new(2, 1).unwrap();
        let z = ParamVector::zeros(s);
        let v = z.view();
        assert_eq!(v.weight_row(0), &[0.0, 0.0]);
        assert_eq!(v.biases(), &[0.0]);
        assert_eq!(v.outer(), &[0.0]);
        assert_eq!(v.offset(), 0.0);

        let s = NetworkShape::new(1, 1).unwrap();
        let p = ParamVector::new(s, vec![7.0, 8.0, 9.0, 10.0]).unwrap();
        let v = p.view();
        assert_eq!((v.weight(0, 0), v.biases()[0], v.outer()[0], v.offset()), (7.0, 8.0, 9.0, 10.0));
    }

    #[test]
    fn weight_rows_follow_row_major_layout() {
        let s = NetworkShape::new(2, 3).unwrap();
        let values: Vec<f64> = (1..=s.param_count()).map(|k| k as f64).collect();
        let p = ParamVector::new(s, values).unwrap();
        let v = p.view();
        // wᵢⱼ at 1-based (i−1)d + j.
        assert_eq!(v.weight(1, 0), 3.0);
        assert_eq!(v.weight(2, 1), 6.0);
        assert_eq!(v.biases(), &[7.0, 8.0, 9.0]);
        assert_eq!(v.outer(), &[10.0, 11.0, 12.0]);
        assert_eq!(v.offset(), 13.0);
    }

    #[test]
    fn realize_exact_examples() {
        let phi = listing_params();
        assert_eq!(pre_activations(&phi, &[2.0]).unwrap(), vec![0.0, 0.0, 4.0]);
        assert_eq!(realize_exact(&phi, &[2.0]).unwrap(), 11.0);

        let z = ParamVector::zeros(NetworkShape::new(2, 4).unwrap());
        assert_eq!(realize_exact(&z, &[0.3, -7.0]).unwrap(), 0.0);

        let ramp = half_ramp();
        assert_eq!(realize_exact(&ramp, &[0.25]).unwrap(), 0.0);
        assert_eq!(realize_exact(&ramp, &[0.75]).unwrap(), 0.25);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let phi = listing_params();
        assert_eq!(
            realize_exact(&phi, &[1.0, 2.0]),
            Err(LabError::InputDimension { expected: 1, got: 2 })
        );
        assert!(active_indicator(&phi, 3, &[1.0]).is_err());
    }

    #[test]
    fn realize_smoothed_examples() {
        let r1 = SmoothIndex::new(1).unwrap();
        let z = ParamVector::zeros(NetworkShape::new(1, 2).unwrap());
        assert_eq!(realize_smoothed(&z, &[0.4], r1).unwrap(), 0.0);

        // Identity unit at x=5, r=50: R_50(5) = 5 − ln(50)/50 + O(e^{-250}).
        let s = NetworkShape::new(1, 1).unwrap();
        let unit = ParamVector::from_parts(s, &[1.0], &[0.0], &[1.0], 0.0).unwrap();
        let r50 = SmoothIndex::new(50).unwrap();
        let out = realize_smoothed(&unit, &[5.0], r50).unwrap();
        assert_abs_diff_eq!(out, 5.0 - 50f64.ln() / 50.0, epsilon = 1e-12);
        // Within 1e-3 of the limit once r is large enough.
        let r_big = SmoothIndex::new(20_000).unwrap();
        assert!((realize_smoothed(&unit, &[5.0], r_big).unwrap() - 5.0).abs() < 1e-3);

        let phi = listing_params();
        let errs: Vec<f64> = [1u64, 10, 100, 1000]
            .iter()
            .map(|&n| (realize_smoothed(&phi, &[2.0], SmoothIndex::new(n).unwrap()).unwrap() - 11.0).abs())
            .collect();
        // Error is 2·|R_r(4) − 4| ≈ 2 ln(r)/r for large r; not monotone from r = 1.
        assert!(errs[3] < errs[2] && errs[2] < errs[1], "{errs:?}");
        assert_abs_diff_eq!(errs[3], 2.0 * 1000f64.ln() / 1000.0, epsilon = 1e-12);
    }

    #[test]
    fn active_indicator_examples() {
        let phi = listing_params();
        assert!(!active_indicator(&phi, 0, &[2.0]).unwrap());
        assert!(!active_indicator(&phi, 1, &[2.0]).unwrap());
        assert!(active_indicator(&phi, 2, &[2.0]).unwrap());
        let z = ParamVector::zeros(NetworkShape::new(3, 2).unwrap());
        for i in 0..2 {
            assert!(!active_indicator(&z, i, &[1.0, -1.0, 0.5]).unwrap());
        }
    }

    fn shape_and_params() -> impl Strategy<Value = (NetworkShape, Vec<f64>)> {
        (1usize..=3, 1usize..=6).prop_flat_map(|(d, h)| {
            let s = NetworkShape::new(d, h).unwrap();
            (Just(s), vec(-3.0f64..3.0, s.param_count()))
        })
    }

    proptest! {
        #[test]
        fn flatten_round_trip((s, values) in shape_and_params()) {
            let p = ParamVector::new(s, values.clone()).unwrap();
            prop_assert_eq!(unpack(&p).flatten(), values);
        }

        #[test]
        fn smoothed_limit_along_doubling((s, values) in shape_and_params(), seed_x in vec(-2.0f64..2.0, 3)) {
            let p = ParamVector::new(s, values).unwrap();
            let x = &seed_x[..s.input_dim()];
            let z = pre_activations(&p, x).unwrap();
            // Keep pre-activations away from the kink.
            prop_assume!(z.iter().all(|zi| zi.abs() > 1e-2));
            let exact = realize_exact(&p, x).unwrap();
            let gaps: Vec<f64> = (10..=40)
                .map(|k| (realize_smoothed(&p, x, SmoothIndex::pow2(k)).unwrap() - exact).abs())
                .collect();
            // Monotone only in the tail; see module docs of `activation`.
            for w in gaps.windows(2) {
                prop_assert!(w[1] <= w[0] + 1e-12, "{:?}", gaps);
            }
            prop_assert!(*gaps.last().unwrap() < 1e-6);
        }

        #[test]
        fn local_lipschitz_bound(
            (s, a) in shape_and_params(),
            delta in vec(-1.0f64..1.0, 40),
            lo in -2.0f64..0.0,
            width in 0.1f64..3.0,
        ) {
            let b = lo + width;
            let phi = ParamVector::new(s, a.clone()).unwrap();
            let psi_vals: Vec<f64> = a.iter().zip(&delta).map(|(x, e)| x + e).collect();
            let psi = ParamVector::new(s, psi_vals).unwrap();
            let a_param = lo.abs().max(b.abs()).max(1.0);
            let dist = phi.values().iter().zip(psi.values()).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
            let bound = 2.0 * a_param * (s.input_dim() as f64 + 1.0) * (s.hidden() as f64 + 1.0)
                * 1f64.max(phi.norm()).max(psi.norm()) * dist;
            let d = s.input_dim();
            let per_axis = 5usize;
            let total = per_axis.pow(d as u32);
            let mut worst = 0.0f64;
            for k in 0..total {
                let mut idx = k;
                let x: Vec<f64> = (0..d).map(|_| {
                    let t = (idx % per_axis) as f64 / (per_axis - 1) as f64;
                    idx /= per_axis;
                    lo + t * (b - lo)
                }).collect();
                let diff = (realize_exact(&phi, &x).unwrap() - realize_exact(&psi, &x).unwrap()).abs();
                worst = worst.max(diff);
            }
            prop_assert!(worst <= bound + 1e-12);
        }

        #[test]
        fn positive_homogeneity(
            (s, values) in shape_and_params(),
            lambda in 0.01f64..10.0,
            xs in vec(-2.0f64..2.0, 3),
        ) {
            let p = ParamVector::new(s, values.clone()).unwrap();
            let x = &xs[..s.input_dim()];
            let mut scaled = values;
            // Scale row 0 of W and b₀.
            for j in 0..s.input_dim() {
                scaled[s.weight_index(0, j)] *= lambda;
            }
            scaled[s.bias_index(0)] *= lambda;
            let q = ParamVector::new(s, scaled).unwrap();
            let h_p = activation::relu(pre_activation(&p, 0, x).unwrap());
            let h_q = activation::relu(pre_activation(&q, 0, x).unwrap());
            prop_assert!((h_q - lambda * h_p).abs() <= 1e-12 * (1.0 + h_q.abs()));
        }
    }
}
