//! The Lyapunov function `V(φ) = ‖φ‖² + (c − 2ξ)²` for constant targets,
//! its pairing and descent identities, and the step-size bounds built on it.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::input::{EmpiricalBatch, InputDistribution};
use crate::net::ParamVector;
use crate::registry::Registry;
use crate::risk::{self, GradientVector, IntegrationMethod, IntegrationOptions, TargetSpec};

/// Mixed absolute/relative slack for the algebraic identities.
pub const IDENTITY_TOL: f64 = 1e-9;

pub const V_FORM: &str = "v-form";
pub const A_FORM: &str = "a-form";

/// `V(φ) = ‖φ‖² + (c − 2ξ)²`.
pub fn lyapunov_value(phi: &ParamVector, xi: f64) -> f64 {
    let shifted = phi.offset() - 2.0 * xi;
    phi.norm_sq() + shifted * shifted
}

/// `∇V(φ) = 2φ + (0, …, 0, 2(c − 2ξ))`.
pub fn lyapunov_gradient(phi: &ParamVector, xi: f64) -> GradientVector {
    let mut g: Vec<f64> = phi.values().iter().map(|p| 2.0 * p).collect();
    let last = phi.shape().offset_index();
    g[last] += 2.0 * (phi.offset() - 2.0 * xi);
    GradientVector::new(phi.shape(), g).expect("finite parameters give a finite gradient")
}

/// One step `θ ↦ θ − γ𝔊` measured two ways.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DescentTerms {
    pub step: f64,
    /// `V(θ − γ𝔊) − V(θ)`, evaluated directly.
    pub lhs: f64,
    /// `γ²‖𝔊‖² + γ²𝔊_𝔡² − 8γ𝔏`.
    pub rhs: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LyapunovReport {
    pub v_value: f64,
    /// `⟨∇V(φ), 𝔊(φ)⟩`.
    pub pairing: f64,
    pub eight_risk: f64,
    pub descent: Option<DescentTerms>,
}

impl LyapunovReport {
    pub fn pairing_residual(&self) -> f64 {
        (self.pairing - self.eight_risk).abs()
    }

    pub fn pairing_holds(&self, tol: f64) -> bool {
        self.pairing_residual() <= tol * (1.0 + self.eight_risk)
    }

    pub fn descent_residual(&self) -> Option<f64> {
        self.descent.map(|t| (t.lhs - t.rhs).abs())
    }

    pub fn descent_holds(&self, tol: f64) -> bool {
        self.descent.is_none_or(|t| (t.lhs - t.rhs).abs() <= tol * (1.0 + t.rhs.abs()))
    }
}

fn report(phi: &ParamVector, xi: f64, risk: f64, grad: &GradientVector) -> LyapunovReport {
    LyapunovReport {
        v_value: lyapunov_value(phi, xi),
        pairing: lyapunov_gradient(phi, xi).dot(grad.values()),
        eight_risk: 8.0 * risk,
        descent: None,
    }
}

/// `⟨∇V(φ), 𝔊(φ)⟩` against `8𝔏(φ)` on one batch.
pub fn pairing_identity(phi: &ParamVector, batch: &EmpiricalBatch, xi: f64) -> Result<LyapunovReport> {
    let (risk, grad) = risk::empirical_risk_and_gradient(phi, batch, xi)?;
    Ok(report(phi, xi, risk, &grad))
}

/// `⟨∇V(φ), 𝒢(φ)⟩` against `8𝓛(φ)`; exact only when `method.is_exact()`.
pub fn pairing_identity_true(
    phi: &ParamVector,
    dist: &InputDistribution,
    xi: f64,
    opts: IntegrationOptions,
) -> Result<(LyapunovReport, IntegrationMethod)> {
    let (risk, grad) = risk::true_risk_and_gradient(phi, dist, &TargetSpec::Constant(xi), opts)?;
    Ok((report(phi, xi, risk.value, &grad.gradient), risk.method))
}

/// Both sides of the exact one-step change of `V` for a given gradient.
pub fn descent_terms(theta: &ParamVector, step: f64, grad: &GradientVector, risk: f64, xi: f64) -> Result<DescentTerms> {
    let next = theta.stepped(step, grad.values())?;
    let lhs = lyapunov_value(&next, xi) - lyapunov_value(theta, xi);
    let last = grad.offset();
    let rhs = step * step * (grad.norm_sq() + last * last) - 8.0 * step * risk;
    Ok(DescentTerms { step, lhs, rhs })
}

/// Pairing report plus the descent terms for `θ − γ𝔊(θ)`.
pub fn descent_identity(theta: &ParamVector, step: f64, batch: &EmpiricalBatch, xi: f64) -> Result<LyapunovReport> {
    let (risk, grad) = risk::empirical_risk_and_gradient(theta, batch, xi)?;
    let mut rep = report(theta, xi, risk, &grad);
    rep.descent = Some(descent_terms(theta, step, &grad, risk, xi)?);
    Ok(rep)
}

/// `[𝐚²(d+1)V(φ₀) + 1]⁻¹`.
pub fn step_bound_v(phi0: &ParamVector, a_param: f64, xi: f64) -> f64 {
    let d = phi0.shape().input_dim() as f64;
    1.0 / (a_param * a_param * (d + 1.0) * lyapunov_value(phi0, xi) + 1.0)
}

/// `[18𝐀⁵(‖φ₀‖ + 1)²]⁻¹` with `𝐀 = max{𝐚, |ξ|, d}`.
pub fn step_bound_a(phi0: &ParamVector, a_param: f64, xi: f64) -> f64 {
    let big_a = a_param.max(xi.abs()).max(phi0.shape().input_dim() as f64);
    let n = phi0.norm() + 1.0;
    1.0 / (18.0 * big_a.powi(5) * n * n)
}

/// A bound on `sup γₙ` derived from the initial parameter.
pub trait StepBound: Send + Sync {
    fn name(&self) -> &str;

    /// The raw bound.
    fn bound(&self, phi0: &ParamVector, a_param: f64, xi: f64) -> f64;

    /// Largest admissible step once the contraction factor `delta` is applied.
    fn admissible(&self, phi0: &ParamVector, a_param: f64, xi: f64, delta: f64) -> f64;
}

/// `γ[𝐚²(d+1)V(Θ₀) + 1] ≤ δ`.
#[derive(Debug, Clone, Copy, Default)]
pub struct VForm;

impl StepBound for VForm {
    fn name(&self) -> &str {
        V_FORM
    }

    fn bound(&self, phi0: &ParamVector, a_param: f64, xi: f64) -> f64 {
        step_bound_v(phi0, a_param, xi)
    }

    fn admissible(&self, phi0: &ParamVector, a_param: f64, xi: f64, delta: f64) -> f64 {
        delta * self.bound(phi0, a_param, xi)
    }
}

/// `18𝐀⁵γ ≤ (‖Θ₀‖ + 1)⁻²`; carries no contraction factor.
#[derive(Debug, Clone, Copy, Default)]
pub struct AForm;

impl StepBound for AForm {
    fn name(&self) -> &str {
        A_FORM
    }

    fn bound(&self, phi0: &ParamVector, a_param: f64, xi: f64) -> f64 {
        step_bound_a(phi0, a_param, xi)
    }

    fn admissible(&self, phi0: &ParamVector, a_param: f64, xi: f64, _delta: f64) -> f64 {
        self.bound(phi0, a_param, xi)
    }
}

pub fn bound_registry() -> Registry<dyn StepBound> {
    let mut reg: Registry<dyn StepBound> = Registry::new("step bound");
    reg.register(V_FORM, Box::new(VForm));
    reg.register(A_FORM, Box::new(AForm));
    reg
}
