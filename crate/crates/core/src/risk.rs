//! Empirical and true risks of the squared loss together with their
//! closed-form generalized gradients.
//!
//! Every quantity here is a weighted sum over nodes: batch samples with weight
//! `1/M` for empirical risks, quadrature nodes or atoms for true risks. The
//! generalized gradient uses the indicator of a strictly positive
//! pre-activation in place of the ReLU derivative.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::activation::{self, SmoothFamily, SmoothIndex};
use crate::error::{LabError, Result};
use crate::input::{self, DistributionKind, EmpiricalBatch, InputDistribution};
use crate::net::{check_input, pre_activation_unchecked, LayoutView, NetworkShape, ParamVector};

/// Below this magnitude a weight is treated as zero when locating kinks.
pub const KINK_WEIGHT_GUARD: f64 = 1e-300;

/// Grid resolution used for `d ≥ 2` uniform distributions unless overridden.
pub const DEFAULT_RESOLUTION: usize = 64;

pub type TargetFn = dyn Fn(&[f64]) -> f64 + Send + Sync;

/// Quadrature nodes `(x, weight)`.
pub type Nodes = Vec<(Vec<f64>, f64)>;

/// The regression target `f` on `[a,b]^d`.
#[derive(Clone)]
pub enum TargetSpec {
    Constant(f64),
    Continuous(Arc<TargetFn>),
}

impl TargetSpec {
    pub fn continuous(f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Self::Continuous(Arc::new(f))
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Self::Constant(xi) => *xi,
            Self::Continuous(f) => f(x),
        }
    }

    pub fn as_constant(&self) -> Option<f64> {
        match self {
            Self::Constant(xi) => Some(*xi),
            Self::Continuous(_) => None,
        }
    }
}

impl fmt::Debug for TargetSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Constant(xi) => f.debug_tuple("Constant").field(xi).finish(),
            Self::Continuous(_) => f.write_str("Continuous(<fn>)"),
        }
    }
}

/// A vector in parameter space, laid out like [`ParamVector`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradientVector {
    shape: NetworkShape,
    values: Vec<f64>,
}

impl GradientVector {
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

    pub fn shape(&self) -> NetworkShape {
        self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn view(&self) -> LayoutView<'_> {
        LayoutView::new(self.shape, &self.values).expect("length checked at construction")
    }

    /// Component along `c`, the last coordinate.
    pub fn offset(&self) -> f64 {
        self.values[self.shape.offset_index()]
    }

    pub fn norm_sq(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn dot(&self, other: &[f64]) -> f64 {
        self.values.iter().zip(other).map(|(a, b)| a * b).sum()
    }

    pub fn distance(&self, other: &GradientVector) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

/// How a true-risk quantity was integrated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum IntegrationMethod {
    /// d = 1 uniform, Gauss rule on kink pieces, constant target: exact.
    ExactPiecewise,
    /// d = 1 uniform, Gauss rule on kink pieces, non-constant target.
    GaussPiecewise,
    /// Tensor midpoint grid; error `O(1/resolution)` near kink hyperplanes.
    MidpointGrid { resolution: usize },
    /// Finite discrete distribution: exact weighted sum.
    DiscreteSum,
}

impl IntegrationMethod {
    pub fn is_exact(&self) -> bool {
        matches!(self, Self::ExactPiecewise | Self::DiscreteSum)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegrationOptions {
    pub resolution: usize,
}

impl Default for IntegrationOptions {
    fn default() -> Self {
        Self {
            resolution: DEFAULT_RESOLUTION,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrueRisk {
    pub value: f64,
    pub method: IntegrationMethod,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrueGradient {
    pub gradient: GradientVector,
    pub method: IntegrationMethod,
}

#[derive(Clone, Copy)]
enum Act<'a> {
    Relu,
    Smooth(&'a dyn SmoothFamily, SmoothIndex),
}

impl Act<'_> {
    #[inline]
    fn value(&self, z: f64) -> f64 {
        match self {
            Act::Relu => activation::relu(z),
            Act::Smooth(f, r) => f.value(*r, z),
        }
    }

    #[inline]
    fn derivative(&self, z: f64) -> f64 {
        match self {
            Act::Relu => activation::relu_step(z),
            Act::Smooth(f, r) => f.derivative(*r, z),
        }
    }
}

/// Weighted sum of `(𝒩(x) − f(x))²` and optionally of its (generalized)
/// gradient over `nodes`.
fn accumulate<'x>(
    phi: &ParamVector,
    nodes: impl IntoIterator<Item = (&'x [f64], f64)>,
    target: &dyn Fn(&[f64]) -> f64,
    act: Act<'_>,
    grad: Option<&mut [f64]>,
) -> Result<f64> {
    let shape = phi.shape();
    let view = phi.view();
    let (h, d) = (shape.hidden(), shape.input_dim());
    let outer = view.outer();
    let mut pre = vec![0.0; h];
    let mut risk = 0.0;
    let mut grad = grad;
    if let Some(g) = grad.as_deref_mut() {
        g.iter_mut().for_each(|v| *v = 0.0);
    }
    for (x, weight) in nodes {
        check_input(shape, x)?;
        let mut out = view.offset();
        for (i, z) in pre.iter_mut().enumerate() {
            *z = pre_activation_unchecked(&view, i, x);
            out += outer[i] * act.value(*z);
        }
        let residual = out - target(x);
        risk += weight * residual * residual;
        if let Some(g) = grad.as_deref_mut() {
            let scale = 2.0 * weight * residual;
            for (i, &z) in pre.iter().enumerate() {
                let slope = act.derivative(z);
                if slope != 0.0 {
                    let common = scale * outer[i] * slope;
                    for j in 0..d {
                        g[i * d + j] += common * x[j];
                    }
                    g[shape.bias_index(i)] += common;
                }
                g[shape.outer_index(i)] += scale * act.value(z);
            }
            g[shape.offset_index()] += scale;
        }
    }
    Ok(risk)
}

fn batch_nodes(batch: &EmpiricalBatch) -> Result<impl Iterator<Item = (&[f64], f64)>> {
    if batch.is_empty() {
        return Err(LabError::EmptyBatch);
    }
    let w = 1.0 / batch.len() as f64;
    Ok(batch.samples().iter().map(move |x| (x.coords(), w)))
}

fn empirical(phi: &ParamVector, batch: &EmpiricalBatch, xi: f64, act: Act<'_>) -> Result<f64> {
    accumulate(phi, batch_nodes(batch)?, &|_| xi, act, None)
}

fn empirical_grad(phi: &ParamVector, batch: &EmpiricalBatch, xi: f64, act: Act<'_>) -> Result<(f64, GradientVector)> {
    let mut g = vec![0.0; phi.shape().param_count()];
    let risk = accumulate(phi, batch_nodes(batch)?, &|_| xi, act, Some(&mut g))?;
    Ok((risk, GradientVector::new(phi.shape(), g)?))
}

/// `(1/M) Σ (𝒩_∞(Xᵐ) − ξ)²`.
pub fn empirical_risk(phi: &ParamVector, batch: &EmpiricalBatch, xi: f64) -> Result<f64> {
    empirical(phi, batch, xi, Act::Relu)
}

/// Empirical risk of the network with the shipped smooth activation.
pub fn empirical_risk_smoothed(phi: &ParamVector, batch: &EmpiricalBatch, xi: f64, r: SmoothIndex) -> Result<f64> {
    empirical(phi, batch, xi, Act::Smooth(&activation::LogSoftplus, r))
}

pub fn empirical_risk_with(
    phi: &ParamVector,
    batch: &EmpiricalBatch,
    xi: f64,
    family: &dyn SmoothFamily,
    r: SmoothIndex,
) -> Result<f64> {
    empirical(phi, batch, xi, Act::Smooth(family, r))
}

/// Closed-form generalized gradient of the empirical risk.
pub fn empirical_gradient(phi: &ParamVector, batch: &EmpiricalBatch, xi: f64) -> Result<GradientVector> {
    Ok(empirical_grad(phi, batch, xi, Act::Relu)?.1)
}

/// Empirical risk and generalized gradient from a single pass.
pub fn empirical_risk_and_gradient(
    phi: &ParamVector,
    batch: &EmpiricalBatch,
    xi: f64,
) -> Result<(f64, GradientVector)> {
    empirical_grad(phi, batch, xi, Act::Relu)
}

/// Exact gradient of the smoothed empirical risk.
pub fn smoothed_empirical_gradient(
    phi: &ParamVector,
    batch: &EmpiricalBatch,
    xi: f64,
    r: SmoothIndex,
) -> Result<GradientVector> {
    Ok(empirical_grad(phi, batch, xi, Act::Smooth(&activation::LogSoftplus, r))?.1)
}

pub fn smoothed_empirical_gradient_with(
    phi: &ParamVector,
    batch: &EmpiricalBatch,
    xi: f64,
    family: &dyn SmoothFamily,
    r: SmoothIndex,
) -> Result<GradientVector> {
    Ok(empirical_grad(phi, batch, xi, Act::Smooth(family, r))?.1)
}

/// Euclidean distance between the smoothed gradient at `r` and the
/// generalized gradient.
pub fn gradient_limit_gap(phi: &ParamVector, batch: &EmpiricalBatch, xi: f64, r: SmoothIndex) -> Result<f64> {
    let smooth = smoothed_empirical_gradient(phi, batch, xi, r)?;
    let limit = empirical_gradient(phi, batch, xi)?;
    Ok(smooth.distance(&limit))
}

/// Central differences of the smoothed empirical risk, coordinate-wise.
///
/// Only meaningful for finite `r`: differencing the ReLU risk across a kink
/// need not reproduce the generalized gradient.
pub fn finite_difference_gradient(
    phi: &ParamVector,
    batch: &EmpiricalBatch,
    xi: f64,
    r: SmoothIndex,
    h: f64,
) -> Result<GradientVector> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(LabError::InvalidConfig(format!("finite-difference step must be positive, got {h}")));
    }
    let shape = phi.shape();
    let mut values = phi.values().to_vec();
    let mut g = Vec::with_capacity(values.len());
    for k in 0..values.len() {
        let orig = values[k];
        values[k] = orig + h;
        let up = empirical_risk_smoothed(&ParamVector::new(shape, values.clone())?, batch, xi, r)?;
        values[k] = orig - h;
        let down = empirical_risk_smoothed(&ParamVector::new(shape, values.clone())?, batch, xi, r)?;
        values[k] = orig;
        g.push((up - down) / (2.0 * h));
    }
    GradientVector::new(shape, g)
}

/// `4(𝐚²(d+1)‖φ‖² + 1) · risk`, an upper bound for the squared norm of the
/// generalized gradient when every input lies in `[−𝐚, 𝐚]^d`.
pub fn gradient_norm_sq_bound(phi: &ParamVector, a_param: f64, risk: f64) -> f64 {
    let d = phi.shape().input_dim() as f64;
    4.0 * (a_param * a_param * (d + 1.0) * phi.norm_sq() + 1.0) * risk
}

/// Variance of the one-sample squared error `(𝒩(X) − ξ)²` for `X` uniform on
/// an interval. The integrand is a piecewise quartic, so the Gauss rule on kink
/// pieces is exact up to rounding.
pub fn squared_error_variance_1d(phi: &ParamVector, dist: &InputDistribution, xi: f64) -> Result<f64> {
    if !dist.is_uniform() || dist.dim() != 1 || phi.shape().input_dim() != 1 {
        return Err(LabError::InvalidDistribution("variance needs a uniform distribution with d = 1".into()));
    }
    let kinks = kink_breakpoints(phi, dist.lower(), dist.upper());
    let nodes = input::piecewise_gauss_nodes(dist, &kinks)?;
    let sq: Vec<(f64, f64)> = nodes
        .into_iter()
        .map(|(x, w)| Ok((w, (crate::net::realize_exact(phi, &[x])? - xi).powi(2))))
        .collect::<Result<_>>()?;
    let mean: f64 = sq.iter().map(|(w, s)| w * s).sum();
    // (e² − mean)² is still a quartic on every piece.
    Ok(sq.iter().map(|(w, s)| w * (s - mean).powi(2)).sum())
}

/// Sorted kink locations `−bᵢ/wᵢ` strictly inside `(a, b)`, d = 1 only.
pub fn kink_breakpoints(phi: &ParamVector, a: f64, b: f64) -> Vec<f64> {
    let view = phi.view();
    let mut kinks: Vec<f64> = (0..phi.shape().hidden())
        .filter_map(|i| {
            let w = view.weight(i, 0);
            (w.abs() > KINK_WEIGHT_GUARD).then(|| -view.biases()[i] / w)
        })
        .filter(|k| k.is_finite() && *k > a && *k < b)
        .collect();
    kinks.sort_by(f64::total_cmp);
    kinks.dedup();
    kinks
}

/// Integration nodes for the true risk of `phi`, with the method used.
pub fn integration_nodes(
    phi: &ParamVector,
    dist: &InputDistribution,
    target: &TargetSpec,
    opts: IntegrationOptions,
) -> Result<(Nodes, IntegrationMethod)> {
    if dist.dim() != phi.shape().input_dim() {
        return Err(LabError::InputDimension {
            expected: phi.shape().input_dim(),
            got: dist.dim(),
        });
    }
    match dist.kind() {
        DistributionKind::Discrete { points, weights } => Ok((
            points
                .iter()
                .zip(weights)
                .map(|(p, w)| (p.coords().to_vec(), *w))
                .collect(),
            IntegrationMethod::DiscreteSum,
        )),
        DistributionKind::UniformBox if dist.dim() == 1 => {
            let kinks = kink_breakpoints(phi, dist.lower(), dist.upper());
            let nodes = input::piecewise_gauss_nodes(dist, &kinks)?
                .into_iter()
                .map(|(x, w)| (vec![x], w))
                .collect();
            let method = if target.as_constant().is_some() {
                IntegrationMethod::ExactPiecewise
            } else {
                IntegrationMethod::GaussPiecewise
            };
            Ok((nodes, method))
        }
        DistributionKind::UniformBox => {
            let nodes = input::quadrature_grid(dist, opts.resolution)?
                .into_iter()
                .map(|(p, w)| (p.coords().to_vec(), w))
                .collect();
            Ok((
                nodes,
                IntegrationMethod::MidpointGrid {
                    resolution: opts.resolution,
                },
            ))
        }
    }
}

fn true_quantities(
    phi: &ParamVector,
    dist: &InputDistribution,
    target: &TargetSpec,
    opts: IntegrationOptions,
    grad: Option<&mut [f64]>,
) -> Result<(f64, IntegrationMethod)> {
    let (nodes, method) = integration_nodes(phi, dist, target, opts)?;
    let f = |x: &[f64]| target.eval(x);
    let risk = accumulate(
        phi,
        nodes.iter().map(|(x, w)| (x.as_slice(), *w)),
        &f,
        Act::Relu,
        grad,
    )?;
    Ok((risk, method))
}

/// `∫ (𝒩_∞(y) − f(y))² μ(dy)`.
pub fn true_risk(phi: &ParamVector, dist: &InputDistribution, target: &TargetSpec) -> Result<TrueRisk> {
    true_risk_with(phi, dist, target, IntegrationOptions::default())
}

pub fn true_risk_with(
    phi: &ParamVector,
    dist: &InputDistribution,
    target: &TargetSpec,
    opts: IntegrationOptions,
) -> Result<TrueRisk> {
    let (value, method) = true_quantities(phi, dist, target, opts, None)?;
    Ok(TrueRisk { value, method })
}

/// Generalized gradient of the true risk.
pub fn true_gradient(phi: &ParamVector, dist: &InputDistribution, target: &TargetSpec) -> Result<TrueGradient> {
    Ok(true_risk_and_gradient(phi, dist, target, IntegrationOptions::default())?.1)
}

pub fn true_risk_and_gradient(
    phi: &ParamVector,
    dist: &InputDistribution,
    target: &TargetSpec,
    opts: IntegrationOptions,
) -> Result<(TrueRisk, TrueGradient)> {
    let mut g = vec![0.0; phi.shape().param_count()];
    let (value, method) = true_quantities(phi, dist, target, opts, Some(&mut g))?;
    Ok((
        TrueRisk { value, method },
        TrueGradient {
            gradient: GradientVector::new(phi.shape(), g)?,
            method,
        },
    ))
}
