//! GD and SGD drivers with step-size validation and per-step monitoring.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::input::{self, InputDistribution};
use crate::lyapunov::{self, StepBound};
use crate::net::{NetworkShape, ParamVector};
use crate::registry::Registry;
use crate::risk::{self, GradientVector, IntegrationOptions, TargetSpec};

pub const GD: &str = "gd";
pub const SGD: &str = "sgd";

/// Slack on `V(Θₙ₊₁) ≤ V(Θₙ)` and on the norm cap.
pub const MONOTONE_TOL: f64 = 1e-9;

/// Relative slack when comparing `sup γₙ` against an admissible bound, so
/// that a step set to exactly `δ · bound` is not rejected by rounding.
pub const BOUND_REL_SLACK: f64 = 1e-12;

/// ChaCha stream reserved for the initial parameter; data uses streams `0..horizon`.
const INIT_STREAM: u64 = u64::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScheduleKind {
    Constant,
    /// `γₙ = γ₀ / (n+1)^power`.
    Polynomial { power: f64 },
}

/// How `γ₀` is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepSize {
    Fixed(f64),
    /// A fraction of the raw value of the selected step bound at `Θ₀`.
    FractionOfBound(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schedule {
    pub kind: ScheduleKind,
    pub step: StepSize,
    pub horizon: usize,
}

impl Schedule {
    pub fn gamma(&self, gamma0: f64, n: usize) -> f64 {
        match self.kind {
            ScheduleKind::Constant => gamma0,
            ScheduleKind::Polynomial { power } => gamma0 / ((n + 1) as f64).powf(power),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BatchSizes {
    Constant(usize),
    /// One entry per step; must cover the whole horizon.
    PerStep(Vec<usize>),
}

impl BatchSizes {
    pub fn at(&self, n: usize) -> usize {
        match self {
            Self::Constant(m) => *m,
            Self::PerStep(ms) => ms[n],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Init {
    Explicit { values: Vec<f64> },
    /// Entries i.i.d. uniform on `[low, high)`. Without a seed the run seed
    /// is used on a stream the data never touches.
    Uniform {
        low: f64,
        high: f64,
        #[serde(default)]
        seed: Option<u64>,
    },
}

fn default_mode() -> String {
    SGD.into()
}

fn default_bound() -> String {
    lyapunov::V_FORM.into()
}

fn default_delta() -> f64 {
    0.9
}

fn default_resolution() -> usize {
    risk::DEFAULT_RESOLUTION
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub shape: NetworkShape,
    pub init: Init,
    pub distribution: InputDistribution,
    pub xi: f64,
    pub schedule: Schedule,
    pub batch_sizes: BatchSizes,
    pub seed: u64,
    #[serde(default = "default_mode")]
    pub mode: String,
    #[serde(default = "default_bound")]
    pub bound: String,
    #[serde(default = "default_delta")]
    pub delta: f64,
    /// SGD evaluates the true risk every this many steps; 0 disables it.
    #[serde(default)]
    pub true_risk_every: usize,
    #[serde(default)]
    pub stop_threshold: Option<f64>,
    #[serde(default = "default_resolution")]
    pub quadrature_resolution: usize,
    /// Run even if the schedule is rejected; monitors are logged, not enforced.
    #[serde(default)]
    pub override_validation: bool,
}

impl RunConfig {
    pub fn check(&self) -> Result<()> {
        let bad = |m: String| Err(LabError::InvalidConfig(m));
        if self.distribution.dim() != self.shape.input_dim() {
            return bad(format!(
                "distribution dimension {} does not match network input dimension {}",
                self.distribution.dim(),
                self.shape.input_dim()
            ));
        }
        if !self.xi.is_finite() {
            return bad("xi must be finite".into());
        }
        match self.schedule.step {
            StepSize::Fixed(g) | StepSize::FractionOfBound(g) if !(g > 0.0 && g.is_finite()) => {
                return bad(format!("initial step must be positive and finite, got {g}"));
            }
            _ => {}
        }
        if let ScheduleKind::Polynomial { power } = self.schedule.kind {
            if !power.is_finite() {
                return bad("polynomial power must be finite".into());
            }
        }
        match &self.batch_sizes {
            BatchSizes::Constant(0) => return bad("batch size must be at least 1".into()),
            BatchSizes::PerStep(ms) if ms.len() < self.schedule.horizon => {
                return bad(format!(
                    "batch size list has {} entries but the horizon is {}",
                    ms.len(),
                    self.schedule.horizon
                ));
            }
            BatchSizes::PerStep(ms) if ms.contains(&0) => return bad("batch sizes must be at least 1".into()),
            _ => {}
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return bad(format!("delta must lie in (0, 1), got {}", self.delta));
        }
        if self.quadrature_resolution < 2 {
            return Err(LabError::InvalidResolution(self.quadrature_resolution));
        }
        if let Some(t) = self.stop_threshold {
            if t.is_nan() || t < 0.0 {
                return bad(format!("stop threshold must be nonnegative, got {t}"));
            }
        }
        if let Init::Uniform { low, high, .. } = self.init {
            if !(low.is_finite() && high.is_finite() && low < high) {
                return bad(format!("uniform init needs finite low < high, got [{low}, {high})"));
            }
        }
        method_registry().get(&self.mode)?;
        lyapunov::bound_registry().get(&self.bound)?;
        Ok(())
    }

    pub fn target(&self) -> TargetSpec {
        TargetSpec::Constant(self.xi)
    }

    pub fn integration(&self) -> IntegrationOptions {
        IntegrationOptions {
            resolution: self.quadrature_resolution,
        }
    }

    pub fn resolve_init(&self) -> Result<ParamVector> {
        match &self.init {
            Init::Explicit { values } => ParamVector::new(self.shape, values.clone()),
            Init::Uniform { low, high, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed.unwrap_or(self.seed));
                rng.set_stream(INIT_STREAM);
                let values = (0..self.shape.param_count()).map(|_| rng.gen_range(*low..*high)).collect();
                ParamVector::new(self.shape, values)
            }
        }
    }
}

/// Both step bounds at `Θ₀` and the outcome of checking the schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsUsed {
    pub selected: String,
    pub v_form: f64,
    pub a_form: f64,
    pub delta: f64,
    /// Largest admissible `sup γₙ` under the selected bound.
    pub admissible: f64,
    pub gamma0: f64,
    pub gamma_sup: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ScheduleValidation {
    Accepted { bounds: BoundsUsed },
    Rejected { bounds: BoundsUsed, reason: String },
}

impl ScheduleValidation {
    pub fn is_accepted(&self) -> bool {
        matches!(self, Self::Accepted { .. })
    }

    pub fn bounds(&self) -> &BoundsUsed {
        match self {
            Self::Accepted { bounds } | Self::Rejected { bounds, .. } => bounds,
        }
    }
}

/// Checks `sup γₙ` against the selected bound at `Θ₀` and `Σγₙ = ∞`.
pub fn validate_schedule(cfg: &RunConfig, phi0: &ParamVector) -> Result<ScheduleValidation> {
    cfg.check()?;
    let a = cfg.distribution.a_param();
    let reg = lyapunov::bound_registry();
    let selected: &dyn StepBound = reg.get(&cfg.bound)?;
    let gamma0 = match cfg.schedule.step {
        StepSize::Fixed(g) => g,
        StepSize::FractionOfBound(f) => f * selected.bound(phi0, a, cfg.xi),
    };
    let bounds = BoundsUsed {
        selected: cfg.bound.clone(),
        v_form: lyapunov::step_bound_v(phi0, a, cfg.xi),
        a_form: lyapunov::step_bound_a(phi0, a, cfg.xi),
        delta: cfg.delta,
        admissible: selected.admissible(phi0, a, cfg.xi, cfg.delta),
        gamma0,
        gamma_sup: gamma0,
    };
    let reason = match cfg.schedule.kind {
        ScheduleKind::Polynomial { power } if power > 1.0 => Some(format!(
            "divergence hypothesis violated: power {power} > 1 makes the step sizes summable"
        )),
        ScheduleKind::Polynomial { power } if power < 0.0 => {
            Some(format!("step sizes grow without bound for power {power} < 0"))
        }
        _ if bounds.gamma_sup > bounds.admissible * (1.0 + BOUND_REL_SLACK) => Some(format!(
            "step-size hypothesis violated: sup gamma {} exceeds {} ({} bound)",
            bounds.gamma_sup, bounds.admissible, bounds.selected
        )),
        _ => None,
    };
    Ok(match reason {
        None => ScheduleValidation::Accepted { bounds },
        Some(reason) => ScheduleValidation::Rejected { bounds, reason },
    })
}

/// Monitors of a single update `Θₙ ↦ Θₙ₊₁`, all measured at `Θₙ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepMonitor {
    pub emp_risk: Option<f64>,
    pub true_risk: Option<f64>,
    pub grad_norm: f64,
    /// `|ΔV − (γ²‖g‖² + γ²g_𝔡² − 8γ·risk)|` for the risk the gradient belongs to.
    pub descent_residual: f64,
}

/// One parameter update rule.
pub trait DescentMethod: Send + Sync {
    fn name(&self) -> &str;

    fn step(&self, theta: &ParamVector, n: usize, gamma: f64, cfg: &RunConfig) -> Result<(ParamVector, StepMonitor)>;
}

fn finish_step(
    theta: &ParamVector,
    n: usize,
    gamma: f64,
    risk: f64,
    grad: Result<GradientVector>,
    xi: f64,
) -> Result<(ParamVector, GradientVector, f64)> {
    let grad = grad.map_err(|_| LabError::NonFiniteGradient { step: n })?;
    let terms = lyapunov::descent_terms(theta, gamma, &grad, risk, xi)?;
    let next = theta.stepped(gamma, grad.values())?;
    Ok((next, grad, (terms.lhs - terms.rhs).abs()))
}

/// `Θₙ₊₁ = Θₙ − γₙ𝔊ⁿ(Θₙ)` on a fresh batch of size `Mₙ`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sgd;

impl DescentMethod for Sgd {
    fn name(&self) -> &str {
        SGD
    }

    fn step(&self, theta: &ParamVector, n: usize, gamma: f64, cfg: &RunConfig) -> Result<(ParamVector, StepMonitor)> {
        let batch = input::sample_batch(&cfg.distribution, n as u64, cfg.batch_sizes.at(n), cfg.seed)?;
        let (risk, grad) = match risk::empirical_risk_and_gradient(theta, &batch, cfg.xi) {
            Ok((r, g)) => (r, Ok(g)),
            Err(LabError::NonFinite(_)) => return Err(LabError::NonFiniteGradient { step: n }),
            Err(e) => return Err(e),
        };
        let (next, grad, residual) = finish_step(theta, n, gamma, risk, grad, cfg.xi)?;
        let true_risk = match cfg.true_risk_every {
            k if k > 0 && n.is_multiple_of(k) => Some(risk::true_risk_with(theta, &cfg.distribution, &cfg.target(), cfg.integration())?.value),
            _ => None,
        };
        Ok((
            next,
            StepMonitor {
                emp_risk: Some(risk),
                true_risk,
                grad_norm: grad.norm(),
                descent_residual: residual,
            },
        ))
    }
}

/// `Θₙ₊₁ = Θₙ − γₙ𝒢(Θₙ)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Gd;

impl DescentMethod for Gd {
    fn name(&self) -> &str {
        GD
    }

    fn step(&self, theta: &ParamVector, n: usize, gamma: f64, cfg: &RunConfig) -> Result<(ParamVector, StepMonitor)> {
        let (risk, grad) = match risk::true_risk_and_gradient(theta, &cfg.distribution, &cfg.target(), cfg.integration()) {
            Ok((r, g)) => (r.value, Ok(g.gradient)),
            Err(LabError::NonFinite(_)) => return Err(LabError::NonFiniteGradient { step: n }),
            Err(e) => return Err(e),
        };
        let (next, grad, residual) = finish_step(theta, n, gamma, risk, grad, cfg.xi)?;
        Ok((
            next,
            StepMonitor {
                emp_risk: None,
                true_risk: Some(risk),
                grad_norm: grad.norm(),
                descent_residual: residual,
            },
        ))
    }
}

pub fn method_registry() -> Registry<dyn DescentMethod> {
    let mut reg: Registry<dyn DescentMethod> = Registry::new("descent method");
    reg.register(GD, Box::new(Gd));
    reg.register(SGD, Box::new(Sgd));
    reg
}

/// One SGD update with explicit step size.
pub fn sgd_step(theta: &ParamVector, n: usize, gamma: f64, cfg: &RunConfig) -> Result<(ParamVector, StepMonitor)> {
    Sgd.step(theta, n, gamma, cfg)
}

/// One GD update with explicit step size.
pub fn gd_step(theta: &ParamVector, n: usize, gamma: f64, cfg: &RunConfig) -> Result<(ParamVector, StepMonitor)> {
    Gd.step(theta, n, gamma, cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub step: usize,
    pub gamma: f64,
    pub emp_risk: Option<f64>,
    pub true_risk: Option<f64>,
    /// `V(Θₙ)`.
    pub v: f64,
    pub grad_norm: f64,
    pub descent_residual: f64,
    /// Seconds since the run started; not part of any deterministic output.
    pub elapsed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub rows: Vec<TrajectoryRow>,
    pub initial: ParamVector,
    pub last: ParamVector,
    pub initial_v: f64,
    pub final_v: f64,
    /// True risk at the last iterate.
    pub final_true_risk: f64,
    pub max_norm: f64,
    pub v_monotone: bool,
    pub validation: ScheduleValidation,
    /// Whether the monotonicity and norm monitors were enforced.
    pub enforced: bool,
    pub stopped_early: bool,
}

impl TrajectoryRecord {
    pub fn steps(&self) -> usize {
        self.rows.len()
    }
}

/// Runs the configured method for the horizon, or until the monitored true
/// risk drops below the stop threshold.
///
/// Under an accepted schedule an increase of `V` or an iterate outside
/// `‖θ‖ ≤ V(Θ₀)^{1/2}` aborts the run.
pub fn run(cfg: &RunConfig) -> Result<TrajectoryRecord> {
    let phi0 = cfg.resolve_init()?;
    let validation = validate_schedule(cfg, &phi0)?;
    if let ScheduleValidation::Rejected { reason, .. } = &validation {
        if !cfg.override_validation {
            return Err(LabError::ScheduleRejected(reason.clone()));
        }
    }
    let enforced = validation.is_accepted();
    let gamma0 = validation.bounds().gamma0;
    let methods = method_registry();
    let method = methods.get(&cfg.mode)?;

    let started = Instant::now();
    let initial_v = lyapunov::lyapunov_value(&phi0, cfg.xi);
    let cap = initial_v.sqrt() + MONOTONE_TOL;
    let mut theta = phi0.clone();
    let mut v = initial_v;
    let mut max_norm = phi0.norm();
    let mut v_monotone = true;
    let mut stopped_early = false;
    let mut rows = Vec::with_capacity(cfg.schedule.horizon);

    for n in 0..cfg.schedule.horizon {
        let gamma = cfg.schedule.gamma(gamma0, n);
        let (next, mon) = method.step(&theta, n, gamma, cfg)?;
        rows.push(TrajectoryRow {
            step: n,
            gamma,
            emp_risk: mon.emp_risk,
            true_risk: mon.true_risk,
            v,
            grad_norm: mon.grad_norm,
            descent_residual: mon.descent_residual,
            elapsed: started.elapsed().as_secs_f64(),
        });
        if let (Some(t), Some(risk)) = (cfg.stop_threshold, mon.true_risk) {
            if risk < t {
                stopped_early = true;
                break;
            }
        }
        let next_v = lyapunov::lyapunov_value(&next, cfg.xi);
        if next_v > v + MONOTONE_TOL {
            v_monotone = false;
            if enforced {
                return Err(LabError::LyapunovIncrease {
                    step: n,
                    before: v,
                    after: next_v,
                });
            }
        }
        let norm = next.norm();
        if enforced && norm > cap {
            return Err(LabError::NormCap { step: n, norm, cap });
        }
        max_norm = max_norm.max(norm);
        theta = next;
        v = next_v;
    }

    let final_true_risk = risk::true_risk_with(&theta, &cfg.distribution, &cfg.target(), cfg.integration())?.value;
    Ok(TrajectoryRecord {
        rows,
        initial: phi0,
        last: theta,
        initial_v,
        final_v: v,
        final_true_risk,
        max_norm,
        v_monotone,
        validation,
        enforced,
        stopped_early,
    })
}
